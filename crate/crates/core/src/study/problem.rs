use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficient::{synthetic_checkerboard, CoefficientField};
use crate::corrector::{build_corrector_set, build_multiscale_system, standard_fem_system, CorrectorCache, MultiscaleSystem};
use crate::error::Result;
use crate::fem::{assemble_load, solve_spd, CsrMatrix, FineDiscretization};
use crate::interpolation::{build_ih, InterpolationOperator};
use crate::leapfrog::{cfl_timestep, Load, MethodSpec, SecondOrderSystem, TimeGrid, Variant};
use crate::mesh::{build_mesh, BoundarySpec};

use super::config::ExampleSpec;

/// Fine discretization plus initial data and source of one experiment.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub example: ExampleSpec,
    pub fine: Arc<FineDiscretization>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub load: Load,
}

pub fn example_field(example: &ExampleSpec) -> Result<CoefficientField> {
    match *example {
        ExampleSpec::Example2 => Ok(CoefficientField::example2()),
        ExampleSpec::SyntheticEx1 {
            seed,
            epsilon,
            alpha,
            beta,
        } => synthetic_checkerboard(seed, epsilon, alpha, beta),
    }
}

pub fn example_boundary(example: &ExampleSpec) -> BoundarySpec {
    match example {
        ExampleSpec::Example2 => BoundarySpec::LeftEdge,
        ExampleSpec::SyntheticEx1 { .. } => BoundarySpec::FullBoundary,
    }
}

/// Example 2 initial displacement: `a(u₀, v) = (5 sin πx₁ sin πx₂, v)`.
pub fn example2_initial_state(fine: &FineDiscretization) -> Result<Vec<f64>> {
    let g = assemble_load(&fine.mesh, &fine.dofs, |x, y, _| 5.0 * (PI * x).sin() * (PI * y).sin(), 0.0);
    solve_spd(&fine.stiffness, &g)
}

pub fn setup_problem(example: &ExampleSpec, fine_level: u32) -> Result<ProblemSetup> {
    let mesh = build_mesh(fine_level)?;
    let bc = example_boundary(example);
    let fine = FineDiscretization::new(&mesh, bc, &example_field(example)?)?;
    let n = fine.n_dofs();
    let (u0, load) = match example {
        ExampleSpec::Example2 => {
            let g = assemble_load(&mesh, &fine.dofs, |x, _, _| (4.0 * PI * x).sin(), 0.0);
            (example2_initial_state(&fine)?, Load::new(g, |t| 1.0 - t))
        }
        ExampleSpec::SyntheticEx1 { .. } => {
            let g = assemble_load(&mesh, &fine.dofs, |_, _, _| 1.0, 0.0);
            (vec![0.0; n], Load::new(g, |_| 1.0))
        }
    };
    Ok(ProblemSetup {
        example: example.clone(),
        fine: Arc::new(fine),
        u0,
        v0: vec![0.0; n],
        load,
    })
}

impl ProblemSetup {
    pub fn with_zero_source(mut self) -> Self {
        self.load = Load::zero(self.fine.n_dofs());
        self
    }

    pub fn beta(&self) -> f64 {
        self.fine.beta
    }

    /// `Δt = C_CFL · H` for a coarse level.
    pub fn coarse_timestep(&self, coarse_level: u32) -> Result<f64> {
        Ok(cfl_timestep(build_mesh(coarse_level)?.mesh_size(), self.beta()))
    }
}

/// Everything needed to time-step one coarse method.
#[derive(Debug)]
pub struct PreparedMethod {
    pub coarse_level: u32,
    pub layers: usize,
    pub method: MethodSpec,
    pub op: InterpolationOperator,
    pub multiscale: MultiscaleSystem,
    pub system: SecondOrderSystem,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub load: Load,
    pub cache_hit: bool,
}

impl PreparedMethod {
    pub fn basis(&self) -> &CsrMatrix {
        &self.multiscale.basis
    }

    pub fn default_grid(&self, final_time: f64) -> Result<TimeGrid> {
        TimeGrid::new(final_time, self.system.cfl_limit())
    }
}

/// Builds the coarse system for a method. All variants start from `I_H u₀`
/// and `I_H v₀` (lifted by `B` on output). LOD tests the source against the
/// multiscale basis (`Bᵀ F`); the simplified variant and standard FEM test
/// against the Q1 basis (`Pᵀ F`).
pub fn prepare_method(
    setup: &ProblemSetup,
    coarse_level: u32,
    layers: usize,
    method: MethodSpec,
    cache: Option<&CorrectorCache>,
) -> Result<PreparedMethod> {
    let fine = &setup.fine;
    let coarse = build_mesh(coarse_level)?;
    let op = build_ih(&coarse, &fine.mesh, fine.bc)?;
    let mut cache_hit = false;
    let multiscale = match method.variant {
        Variant::StandardFem => standard_fem_system(&op, fine)?,
        Variant::Lod | Variant::LodSimplified => {
            let set = match cache {
                Some(c) => {
                    let (set, hit) = c.get_or_build(&op, fine, layers)?;
                    cache_hit = hit;
                    set
                }
                None => build_corrector_set(&op, fine, layers)?,
            };
            build_multiscale_system(&set, &op, fine)?
        }
    };
    let system = SecondOrderSystem::for_method(method, &multiscale, setup.beta())?;
    Ok(PreparedMethod {
        coarse_level,
        layers,
        method,
        u0: op.apply(&setup.u0),
        v0: op.apply(&setup.v0),
        load: match method.variant {
            Variant::LodSimplified => setup.load.project(op.prolongation()),
            _ => setup.load.project(&multiscale.basis),
        },
        op,
        multiscale,
        system,
        cache_hit,
    })
}
