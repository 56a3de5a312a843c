use serde::Serialize;

use crate::corrector::{build_corrector_set, build_multiscale_system};
use crate::error::{Error, Result};
use crate::fem::sparse::{dot, norm2};
use crate::fem::FineDiscretization;
use crate::interpolation::build_ih;
use crate::leapfrog::{leapfrog_run, Load, RunOptions, SecondOrderSystem, TimeGrid};
use crate::mesh::build_mesh;

use super::problem::example2_initial_state;
use super::ExampleSpec;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Quick end-to-end property checks on a small Example 2 problem (`H = 2⁻²`, `h = 2⁻⁶`).
pub fn run_selftest() -> Result<Vec<Check>> {
    let coarse = build_mesh(2)?;
    let fine_mesh = build_mesh(6)?;
    let field = super::problem::example_field(&ExampleSpec::Example2)?;
    let fine = FineDiscretization::new(&fine_mesh, crate::mesh::BoundarySpec::LeftEdge, &field)?;
    let op = build_ih(&coarse, &fine_mesh, fine.bc)?;
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for (k, w) in op.random_kernel_vectors(10, 7).iter().enumerate() {
        let v: Vec<f64> = op.prolongation().matvec(&vec![1.0 + k as f64; op.coarse_dofs().len()]);
        let u: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let back = op.apply(&u);
        let target = vec![1.0 + k as f64; back.len()];
        let err: Vec<f64> = back.iter().zip(&target).map(|(a, b)| a - b).collect();
        worst = worst.max(norm2(&err) / norm2(&target));
    }
    checks.push(Check::at_most("projectivity", worst, 1e-12));

    let set = build_corrector_set(&op, &fine, coarse.per_side())?;
    let ms = build_multiscale_system(&set, &op, &fine)?;
    let mut worst: f64 = 0.0;
    for w in op.random_kernel_vectors(10, 11) {
        let aw = fine.stiffness.matvec(&w);
        let lhs = ms.basis.transpose_matvec(&aw);
        let scale = dot(&w, &aw).sqrt() * ms.stiffness.diagonal().iter().fold(0.0f64, |m, &d| m.max(d)).sqrt();
        worst = worst.max(lhs.iter().fold(0.0f64, |m, &x| m.max(x.abs())) / scale);
    }
    checks.push(Check::at_most("a_orthogonality", worst, 1e-8));

    let sys = SecondOrderSystem::for_method(crate::leapfrog::MethodSpec::new(crate::leapfrog::Variant::Lod), &ms, fine.beta)?;
    let u0 = op.apply(&example2_initial_state(&fine)?);
    let zero = vec![0.0; u0.len()];
    let grid = TimeGrid::new(1.0, sys.cfl_limit())?;
    let (_, energy) = leapfrog_run(&sys, &u0, &zero, &Load::zero(u0.len()), &grid, &RunOptions::default())?;
    checks.push(Check::at_most("energy_drift", energy.relative_drift(), 1e-10));

    let fast = TimeGrid::with_steps(3.0 * sys.cfl_limit(), 10)?;
    let refused = matches!(
        leapfrog_run(&sys, &u0, &zero, &Load::zero(u0.len()), &fast, &RunOptions::default()),
        Err(Error::CflViolation { .. })
    );
    checks.push(Check {
        name: "cfl_guard",
        value: if refused { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: refused,
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest().unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
