//! Benchmark fixtures: a small Example 2 problem split into its offline
//! (corrector) and online (time stepping) stages.

use lodwave::leapfrog::{Load, SecondOrderSystem};
use lodwave::study::problem::{example_boundary, example_field, example2_initial_state};
use lodwave::{build_ih, build_mesh, ExampleSpec, FineDiscretization, InterpolationOperator, MethodSpec, Variant};

pub struct Fixture {
    pub fine: FineDiscretization,
    pub op: InterpolationOperator,
    pub layers: usize,
}

impl Fixture {
    pub fn new(coarse_level: u32, fine_level: u32, layers: usize) -> Self {
        let example = ExampleSpec::Example2;
        let mesh = build_mesh(fine_level).expect("fine mesh");
        let fine = FineDiscretization::new(&mesh, example_boundary(&example), &example_field(&example).expect("coefficient"))
            .expect("fine discretization");
        let op = build_ih(&build_mesh(coarse_level).expect("coarse mesh"), &mesh, fine.bc).expect("interpolation");
        Self { fine, op, layers }
    }

    /// Coarse LOD system with its initial state and a zero load.
    pub fn online(&self) -> (SecondOrderSystem, Vec<f64>, Load) {
        let set = lodwave::build_corrector_set(&self.op, &self.fine, self.layers).expect("correctors");
        let ms = lodwave::build_multiscale_system(&set, &self.op, &self.fine).expect("system");
        let sys = SecondOrderSystem::for_method(MethodSpec::new(Variant::Lod), &ms, self.fine.beta).expect("mass");
        let u0 = self.op.apply(&example2_initial_state(&self.fine).expect("initial state"));
        let n = u0.len();
        (sys, u0, Load::zero(n))
    }
}
