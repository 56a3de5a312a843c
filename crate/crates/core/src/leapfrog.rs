//! Explicit leapfrog time stepping for `M ü + K u = F` with a Taylor start,
//! CFL step selection and discrete energy tracking.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corrector::MultiscaleSystem;
use crate::error::{Error, Result};
use crate::fem::sparse::{dot, norm_inf};
use crate::fem::{factor_spd, lump, CsrMatrix, FineDiscretization, SpdSolver};

/// Safety factor of the practical CFL constant `√2 β^{-1/2} · 0.14`.
pub const CFL_FACTOR: f64 = 0.14;

/// Growth beyond this multiple of the data scale counts as instability.
const GROWTH_LIMIT: f64 = 1e6;

/// Relative slack when comparing step counts and step sizes.
const TIME_TOL: f64 = 1e-9;

/// `Δt = √2 β^{-1/2} · 0.14 · H`.
pub fn cfl_timestep(mesh_size: f64, beta: f64) -> f64 {
    std::f64::consts::SQRT_2 / beta.sqrt() * CFL_FACTOR * mesh_size
}

/// Largest step `≤ limit` that divides `dt_coarse` evenly, and the divisor.
pub fn aligned_substep(dt_coarse: f64, limit: f64) -> (f64, usize) {
    let k = ((dt_coarse / limit) * (1.0 - TIME_TOL)).ceil().max(1.0) as usize;
    (dt_coarse / k as f64, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub final_time: f64,
}

impl TimeGrid {
    /// `N = ⌈T/Δt⌉`, with round-off in `T/Δt` forgiven.
    pub fn new(final_time: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::Argument(format!("invalid time grid T={final_time}, dt={dt}")));
        }
        let n_steps = ((final_time / dt) * (1.0 - TIME_TOL)).ceil().max(1.0) as usize;
        Ok(Self {
            dt,
            n_steps,
            final_time,
        })
    }

    /// Explicit step count; `final_time` becomes `n_steps · dt`.
    pub fn with_steps(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
            return Err(Error::Argument(format!("invalid time grid dt={dt}, steps={n_steps}")));
        }
        Ok(Self {
            dt,
            n_steps,
            final_time: dt * n_steps as f64,
        })
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Last grid time `N Δt` (at least `T`).
    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Classical Q1 finite elements (on the coarse mesh, or the fine mesh for references).
    StandardFem,
    /// Multiscale mass and stiffness.
    Lod,
    /// Multiscale stiffness with the classical coarse mass.
    LodSimplified,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::StandardFem => "standard_fem",
            Variant::Lod => "lod",
            Variant::LodSimplified => "lod_simplified",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard_fem" | "fem" => Some(Variant::StandardFem),
            "lod" => Some(Variant::Lod),
            "lod_simplified" | "simplified" => Some(Variant::LodSimplified),
            _ => None,
        }
    }

    pub fn needs_correctors(self) -> bool {
        !matches!(self, Variant::StandardFem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub variant: Variant,
    /// Row-sum lumped mass (experimental).
    #[serde(default)]
    pub lumped_mass: bool,
}

impl MethodSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            lumped_mass: false,
        }
    }
}

/// `M ü + K u = F` with a factorized mass matrix.
pub struct SecondOrderSystem {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    /// Mesh size `H` the CFL bound refers to.
    pub mesh_size: f64,
    pub beta: f64,
    mass_solver: SpdSolver,
}

impl std::fmt::Debug for SecondOrderSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecondOrderSystem")
            .field("dofs", &self.dim())
            .field("mesh_size", &self.mesh_size)
            .field("beta", &self.beta)
            .finish()
    }
}

impl SecondOrderSystem {
    pub fn new(mass: CsrMatrix, stiffness: CsrMatrix, mesh_size: f64, beta: f64) -> Result<Self> {
        if mass.nrows() != stiffness.nrows() || mass.ncols() != stiffness.ncols() {
            return Err(Error::Argument("mass and stiffness sizes differ".into()));
        }
        let mass_solver = factor_spd(&mass, "mass")?;
        Ok(Self {
            mass,
            stiffness,
            mesh_size,
            beta,
            mass_solver,
        })
    }

    /// Picks `(M, K)` for the method from a coarse system: `(M_ms, K_ms)` for the
    /// LOD and for standard FEM (whose basis is plain prolongation), `(M_fem, K_ms)`
    /// for the simplified variant.
    pub fn for_method(method: MethodSpec, sys: &MultiscaleSystem, beta: f64) -> Result<Self> {
        let mass = match method.variant {
            Variant::StandardFem | Variant::Lod => sys.mass.clone(),
            Variant::LodSimplified => sys.fem_mass.clone(),
        };
        let mass = if method.lumped_mass { lump(&mass) } else { mass };
        Self::new(mass, sys.stiffness.clone(), sys.mesh_size, beta)
    }

    /// Standard FEM on the fine grid itself.
    pub fn fine(fine: &FineDiscretization, lumped_mass: bool) -> Result<Self> {
        let mass = if lumped_mass { lump(&fine.mass) } else { fine.mass.clone() };
        Self::new(mass, fine.stiffness.clone(), fine.mesh.mesh_size(), fine.beta)
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn cfl_limit(&self) -> f64 {
        cfl_timestep(self.mesh_size, self.beta)
    }

    pub fn solve_mass(&self, b: &[f64]) -> Vec<f64> {
        self.mass_solver.solve(b)
    }

    /// `½(u̇ᵀ M u̇ + u_prevᵀ K u_next)` with `u̇ = (u_next − u_prev)/Δt`.
    pub fn energy(&self, u_prev: &[f64], u_next: &[f64], dt: f64) -> f64 {
        let vel: Vec<f64> = u_next.iter().zip(u_prev).map(|(a, b)| (a - b) / dt).collect();
        0.5 * (dot(&self.mass.matvec(&vel), &vel) + dot(&self.stiffness.matvec(u_prev), u_next))
    }
}

/// Load vector `F(t) = h(t) · g` with a fixed spatial part `g`.
#[derive(Clone)]
pub struct Load {
    spatial: Vec<f64>,
    temporal: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Load {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Load").field("dofs", &self.spatial.len()).finish()
    }
}

impl Load {
    pub fn new(spatial: Vec<f64>, temporal: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            spatial,
            temporal: Arc::new(temporal),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![0.0; n], |_| 0.0)
    }

    pub fn dim(&self) -> usize {
        self.spatial.len()
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        (self.temporal)(t)
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let h = self.time_factor(t);
        self.spatial.iter().map(|g| h * g).collect()
    }

    /// Galerkin projection onto the span of the basis columns: `Bᵀ g`.
    pub fn project(&self, basis: &CsrMatrix) -> Load {
        Load {
            spatial: basis.transpose_matvec(&self.spatial),
            temporal: Arc::clone(&self.temporal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Refuse steps above the CFL limit.
    pub enforce_cfl: bool,
    /// Keep every `stride`-th state (the last state is always kept).
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            enforce_cfl: true,
            stride: 1,
        }
    }
}

/// Stored states `u_n` at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// CSV with one row per stored state: `t, u_0, u_1, …`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string()).chain((0..n).map(|i| format!("u{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, u) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for x in u {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `E^{n+1/2}` for `n = 0..N−1`, plus the source work per step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub dt: f64,
    pub values: Vec<f64>,
    /// `Δt (F_n, u̇_{n+1/2} + u̇_{n−1/2})` for `n = 1..N−1` (entry `n−1`).
    pub work: Vec<f64>,
}

impl EnergyTrace {
    /// `max_n |E^{n+1/2} − E^{1/2}| / |E^{1/2}|`.
    pub fn relative_drift(&self) -> f64 {
        let Some(&e0) = self.values.first() else { return 0.0 };
        let dev = self.values.iter().fold(0.0f64, |m, &e| m.max((e - e0).abs()));
        if e0 == 0.0 {
            dev
        } else {
            dev / e0.abs()
        }
    }

    /// Worst relative defect of `2(E^{n+1/2} − E^{n−1/2}) = work_n`, scaled by
    /// the magnitude of the terms involved.
    pub fn identity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &w) in self.work.iter().enumerate() {
            let (a, b) = (self.values[k], self.values[k + 1]);
            let scale = a.abs().max(b.abs()).max(w.abs());
            if scale > 0.0 {
                worst = worst.max((2.0 * (b - a) - w).abs() / scale);
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,t,energy")?;
        for (n, e) in self.values.iter().enumerate() {
            writeln!(w, "{n},{},{e}", (n as f64 + 0.5) * self.dt)?;
        }
        Ok(())
    }
}

/// `u₁ = u₀ + Δt v₀ + ½Δt² M⁻¹(F₀ − K u₀)`.
pub fn taylor_first_step(sys: &SecondOrderSystem, u0: &[f64], v0: &[f64], f0: &[f64], dt: f64) -> Vec<f64> {
    let ku = sys.stiffness.matvec(u0);
    let rhs: Vec<f64> = f0.iter().zip(&ku).map(|(f, k)| f - k).collect();
    let acc = sys.solve_mass(&rhs);
    u0.iter()
        .zip(v0)
        .zip(&acc)
        .map(|((u, v), a)| u + dt * v + 0.5 * dt * dt * a)
        .collect()
}

fn check_dims(sys: &SecondOrderSystem, vs: &[&[f64]], load: &Load) -> Result<()> {
    let n = sys.dim();
    if vs.iter().any(|v| v.len() != n) || load.dim() != n {
        return Err(Error::Argument(format!("state or load size does not match the {n}-dof system")));
    }
    Ok(())
}

fn check_cfl(sys: &SecondOrderSystem, dt: f64, opts: &RunOptions) -> Result<()> {
    let limit = sys.cfl_limit();
    if opts.enforce_cfl && dt > limit * (1.0 + TIME_TOL) {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}

/// Leapfrog from the Taylor start to `N = grid.n_steps`.
pub fn leapfrog_run(
    sys: &SecondOrderSystem,
    u0: &[f64],
    v0: &[f64],
    load: &Load,
    grid: &TimeGrid,
    opts: &RunOptions,
) -> Result<(Trajectory, EnergyTrace)> {
    check_dims(sys, &[u0, v0], load)?;
    check_cfl(sys, grid.dt, opts)?;
    let u1 = taylor_first_step(sys, u0, v0, &load.at(0.0), grid.dt);
    let t_end = grid.horizon();
    let data_scale = norm_inf(v0) * t_end;
    leapfrog_from_pair(sys, u0.to_vec(), u1, load, 0.0, grid.dt, grid.n_steps, opts, data_scale)
}

/// Continues the recursion from the pair `(u_0, u_1)` at times `(t0, t0+Δt)`
/// for `n_steps` steps in total (so the last state is at `t0 + n_steps Δt`).
/// A negative `dt` runs the scheme backwards in time.
#[allow(clippy::too_many_arguments)]
pub fn leapfrog_from_pair(
    sys: &SecondOrderSystem,
    u_prev: Vec<f64>,
    u_curr: Vec<f64>,
    load: &Load,
    t0: f64,
    dt: f64,
    n_steps: usize,
    opts: &RunOptions,
    extra_scale: f64,
) -> Result<(Trajectory, EnergyTrace)> {
    check_dims(sys, &[&u_prev, &u_curr], load)?;
    check_cfl(sys, dt.abs(), opts)?;
    if n_steps == 0 {
        return Err(Error::Argument("at least one step is required".into()));
    }
    let stride = opts.stride.max(1);
    let horizon = (n_steps as f64 * dt).abs();
    let max_h = (0..=n_steps).fold(0.0f64, |m, n| m.max(load.time_factor(t0 + n as f64 * dt).abs()));
    let accel_scale = if max_h > 0.0 { norm_inf(&sys.solve_mass(load.spatial())) * max_h } else { 0.0 };
    let scale = norm_inf(&u_prev)
        .max(norm_inf(&u_curr))
        .max(extra_scale)
        .max(accel_scale * horizon * horizon);

    let mut traj = Trajectory {
        dt,
        stride,
        times: vec![t0],
        states: vec![u_prev.clone()],
    };
    let push = |traj: &mut Trajectory, n: usize, u: &[f64]| {
        if n.is_multiple_of(stride) || n == n_steps {
            traj.times.push(t0 + n as f64 * dt);
            traj.states.push(u.to_vec());
        }
    };
    let mut energy = EnergyTrace {
        dt: dt.abs(),
        values: Vec::with_capacity(n_steps),
        work: Vec::with_capacity(n_steps.saturating_sub(1)),
    };
    let check = |u: &[f64], step: usize| -> Result<()> {
        let m = norm_inf(u);
        if !m.is_finite() || (scale > 0.0 && m > GROWTH_LIMIT * scale) {
            return Err(Error::Instability { step });
        }
        Ok(())
    };
    check(&u_curr, 1)?;
    push(&mut traj, 1, &u_curr);
    energy.values.push(sys.energy(&u_prev, &u_curr, dt));

    let n = sys.dim();
    let dt2 = dt * dt;
    let mut ku = vec![0.0; n];
    let mut prev = u_prev;
    let mut curr = u_curr;
    for step in 1..n_steps {
        let t = t0 + step as f64 * dt;
        let f = load.at(t);
        sys.stiffness.matvec_into(&curr, &mut ku);
        let mut rhs: Vec<f64> = f.iter().zip(&ku).map(|(a, b)| a - b).collect();
        sys.mass_solver.solve_in_place(&mut rhs);
        let next: Vec<f64> = (0..n).map(|i| 2.0 * curr[i] - prev[i] + dt2 * rhs[i]).collect();
        check(&next, step + 1)?;
        // Δt (F_n, u̇_{n+1/2} + u̇_{n−1/2}) = (F_n, u_{n+1} − u_{n−1}).
        let diff: Vec<f64> = next.iter().zip(&prev).map(|(a, b)| a - b).collect();
        energy.work.push(dot(&f, &diff));
        energy.values.push(sys.energy(&curr, &next, dt));
        push(&mut traj, step + 1, &next);
        prev = curr;
        curr = next;
    }
    Ok((traj, energy))
}

/// Maps every state through the basis (coarse coefficients → fine nodal values).
pub fn elevate_to_fine(traj: &Trajectory, basis: &CsrMatrix) -> Result<Trajectory> {
    if traj.states.iter().any(|u| u.len() != basis.ncols()) {
        return Err(Error::Argument("trajectory does not match the basis".into()));
    }
    Ok(Trajectory {
        dt: traj.dt,
        stride: traj.stride,
        times: traj.times.clone(),
        states: traj.states.iter().map(|u| basis.matvec(u)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::TripletBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(m: f64, k: f64) -> SecondOrderSystem {
        SecondOrderSystem::new(CsrMatrix::from_diagonal(&[m]), CsrMatrix::from_diagonal(&[k]), 1.0, 1.0).unwrap()
    }

    /// 1D Dirichlet Laplacian chain with lumped unit mass.
    fn chain(n: usize) -> SecondOrderSystem {
        let mut k = TripletBuilder::new(n, n);
        for i in 0..n {
            k.push(i, i, 2.0);
            if i + 1 < n {
                k.push(i, i + 1, -1.0);
                k.push(i + 1, i, -1.0);
            }
        }
        SecondOrderSystem::new(CsrMatrix::identity(n), k.build(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn cfl_examples() {
        let h3 = std::f64::consts::SQRT_2 / 8.0;
        assert!((cfl_timestep(h3, 1.96) - 0.025).abs() < 1e-15);
        for level in 0..8 {
            let h = std::f64::consts::SQRT_2 * 0.5f64.powi(level);
            // √2 · 0.14 · √2 = 0.28.
            let want = 0.28 * 0.5f64.powi(level);
            assert!((cfl_timestep(h, 1.0) - want).abs() <= 1e-14 * want);
        }
        let dt = cfl_timestep(std::f64::consts::SQRT_2 / 2.0, 17.78);
        // 0.14 / √17.78 = 0.0332018…
        assert!((dt - 0.033_201_840_381_587).abs() < 1e-12, "{dt}");
    }

    #[test]
    fn time_grid_counts() {
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        assert_eq!(g.n_steps, 10);
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps, 4);
        assert!(g.horizon() >= 1.0 && g.time(3) < 1.0);
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        let (dt, k) = aligned_substep(0.1, 0.025);
        assert_eq!(k, 4);
        assert!((dt - 0.025).abs() < 1e-17);
        let (dt, k) = aligned_substep(0.1, 0.03);
        assert_eq!(k, 4);
        assert!(dt <= 0.03);
    }

    #[test]
    fn taylor_examples() {
        let s = scalar(1.0, 0.0);
        assert_eq!(taylor_first_step(&s, &[0.0], &[0.0], &[0.0], 0.1), vec![0.0]);
        let u1 = taylor_first_step(&s, &[1.0], &[2.0], &[4.0], 0.1);
        assert!((u1[0] - (1.0 + 0.2 + 0.5 * 0.01 * 4.0)).abs() < 1e-15);
        let omega: f64 = 3.0;
        for dt in [0.1, 0.05, 0.025] {
            let u1 = taylor_first_step(&scalar(1.0, omega * omega), &[1.0], &[0.0], &[0.0], dt)[0];
            assert!((u1 - (1.0 - 0.5 * (omega * dt).powi(2))).abs() < 1e-15);
            assert!((u1 - (omega * dt).cos()).abs() <= (omega * dt).powi(4) / 24.0 + 1e-15);
        }
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let s = chain(5);
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        let (traj, energy) = leapfrog_run(&s, &[0.0; 5], &[0.0; 5], &Load::zero(5), &g, &RunOptions::default()).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.states.iter().all(|u| u.iter().all(|&x| x == 0.0)));
        assert!(energy.values.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn energy_conservation_and_identity() {
        let n = 30;
        let s = chain(n);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = TimeGrid::new(50.0, 0.5).unwrap();
        let opts = RunOptions {
            enforce_cfl: false,
            stride: 1,
        };
        let (_, e) = leapfrog_run(&s, &u0, &v0, &Load::zero(n), &g, &opts).unwrap();
        assert_eq!(e.values.len(), g.n_steps);
        assert!(e.relative_drift() <= 1e-10, "{}", e.relative_drift());
        let load = Load::new((0..n).map(|i| (i as f64).sin()).collect(), |t| (1.0 - t).cos());
        let (_, e) = leapfrog_run(&s, &u0, &v0, &load, &g, &opts).unwrap();
        assert!(e.identity_defect() <= 1e-9, "{}", e.identity_defect());
        assert!(e.relative_drift() > 1e-6);
    }

    #[test]
    fn time_reversibility() {
        let n = 20;
        let s = chain(n);
        let u0: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin()).collect();
        let dt = 0.4;
        let opts = RunOptions {
            enforce_cfl: false,
            stride: 1,
        };
        let g = TimeGrid::with_steps(dt, 200).unwrap();
        let (fwd, _) = leapfrog_run(&s, &u0, &vec![0.0; n], &Load::zero(n), &g, &opts).unwrap();
        let k = fwd.len();
        let (back, _) = leapfrog_from_pair(
            &s,
            fwd.states[k - 1].clone(),
            fwd.states[k - 2].clone(),
            &Load::zero(n),
            g.horizon(),
            -dt,
            200,
            &opts,
            0.0,
        )
        .unwrap();
        let m = back.len();
        for i in 0..n {
            assert!((back.states[m - 1][i] - fwd.states[0][i]).abs() < 1e-8);
            assert!((back.states[m - 2][i] - fwd.states[1][i]).abs() < 1e-8);
        }
    }

    #[test]
    fn second_order_in_time() {
        // Scalar oscillator: compare against the exact solution cos(ωt).
        let omega: f64 = 2.0;
        let s = scalar(1.0, omega * omega);
        let err = |dt: f64| {
            let g = TimeGrid::new(1.0, dt).unwrap();
            let (traj, _) = leapfrog_run(&s, &[1.0], &[0.0], &Load::zero(1), &g, &RunOptions::default()).unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .fold(0.0f64, |m, (t, u)| m.max((u[0] - (omega * t).cos()).abs()))
        };
        let (e1, e2, e3) = (err(0.05), err(0.025), err(0.0125));
        for r in [e1 / e2, e2 / e3] {
            assert!((3.2..=4.8).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn cfl_enforcement_and_blow_up() {
        let s = chain(10);
        let g = TimeGrid::new(1.0, 0.5).unwrap();
        let u0: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(matches!(
            leapfrog_run(&s, &u0, &[0.0; 10], &Load::zero(10), &g, &RunOptions::default()),
            Err(Error::CflViolation { .. })
        ));
        // Stability of the chain requires Δt < 1 (λ_max < 4); Δt = 1.5 must blow up.
        let g = TimeGrid::new(200.0, 1.5).unwrap();
        let opts = RunOptions {
            enforce_cfl: false,
            stride: 1,
        };
        match leapfrog_run(&s, &u0, &[0.0; 10], &Load::zero(10), &g, &opts) {
            Err(Error::Instability { step }) => assert!(step < g.n_steps),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn stride_and_elevation() {
        let s = chain(4);
        let g = TimeGrid::with_steps(0.1, 10).unwrap();
        let opts = RunOptions {
            enforce_cfl: false,
            stride: 4,
        };
        let (traj, _) = leapfrog_run(&s, &[1.0, 0.0, 0.0, 1.0], &[0.0; 4], &Load::zero(4), &g, &opts).unwrap();
        let steps: Vec<usize> = traj.times.iter().map(|t| (t / 0.1).round() as usize).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
        let zero = Trajectory {
            dt: 0.1,
            stride: 1,
            times: vec![0.0],
            states: vec![vec![0.0; 4]],
        };
        let up = elevate_to_fine(&zero, &CsrMatrix::identity(4)).unwrap();
        assert_eq!(up.states[0], vec![0.0; 4]);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,u0,u1,u2,u3\n0,1,0,0,1\n"));
    }
}
