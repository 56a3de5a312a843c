use crate::error::{Error, Result};
use crate::fem::sparse::quadratic_form;
use crate::fem::{CsrMatrix, FineDiscretization};
use crate::leapfrog::{TimeGrid, Trajectory};

/// State stored at time `t`, matched to within a tiny fraction of the step.
pub fn state_at(traj: &Trajectory, t: f64) -> Option<&[f64]> {
    let tol = 1e-9 * traj.dt.abs().max(f64::MIN_POSITIVE);
    let k = traj.times.partition_point(|&s| s < t - tol);
    match traj.times.get(k) {
        Some(&s) if (s - t).abs() <= tol => Some(&traj.states[k]),
        _ => None,
    }
}

fn lookup<'a>(traj: &'a Trajectory, t: f64, what: &str) -> Result<&'a [f64]> {
    state_at(traj, t).ok_or_else(|| Error::TimeGridMismatch(format!("{what} has no state at t = {t}")))
}

/// `‖d‖²_{L²} + ‖∇d‖²_{L²}` on fine free dofs.
pub fn h1_norm_squared(fine: &FineDiscretization, d: &[f64]) -> f64 {
    quadratic_form(&fine.mass, d) + quadratic_form(&fine.unit_stiffness, d)
}

/// Discrete `L²(0,T; H¹)` norm `(Σ_{i=1}^N Δt ‖u(t_i) − u_ref(t_i)‖²_{H¹})^{1/2}`
/// of the difference of two fine trajectories, sampled on `grid`.
pub fn error_norm(traj: &Trajectory, reference: &Trajectory, grid: &TimeGrid, fine: &FineDiscretization) -> Result<f64> {
    error_norm_with_basis(traj, None, reference, grid, fine)
}

/// As [`error_norm`], with the trajectory first mapped through `basis`
/// (coarse coefficients → fine nodal values) one state at a time.
pub fn error_norm_with_basis(
    traj: &Trajectory,
    basis: Option<&CsrMatrix>,
    reference: &Trajectory,
    grid: &TimeGrid,
    fine: &FineDiscretization,
) -> Result<f64> {
    let mut sum = 0.0;
    for i in 1..=grid.n_steps {
        let t = grid.time(i);
        let u = lookup(traj, t, "trajectory")?;
        let r = lookup(reference, t, "reference")?;
        let lifted;
        let u = match basis {
            Some(b) => {
                lifted = b.matvec(u);
                &lifted[..]
            }
            None => u,
        };
        if u.len() != r.len() || r.len() != fine.n_dofs() {
            return Err(Error::Argument("trajectory and reference live on different spaces".into()));
        }
        let d: Vec<f64> = u.iter().zip(r).map(|(a, b)| a - b).collect();
        sum += grid.dt * h1_norm_squared(fine, &d);
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::mesh::{build_mesh, BoundarySpec};

    fn traj(dt: f64, n: usize, f: impl Fn(usize) -> Vec<f64>) -> Trajectory {
        Trajectory {
            dt,
            stride: 1,
            times: (0..=n).map(|i| i as f64 * dt).collect(),
            states: (0..=n).map(f).collect(),
        }
    }

    #[test]
    fn norm_examples() {
        let mesh = build_mesh(4).unwrap();
        let fine = FineDiscretization::new(&mesh, BoundarySpec::LeftEdge, &CoefficientField::constant(2.0).unwrap()).unwrap();
        let n = fine.n_dofs();
        let grid = TimeGrid::new(1.0, 0.125).unwrap();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let zero = traj(0.125, 8, |_| vec![0.0; n]);
        let same = traj(0.125, 8, |_| v.clone());
        assert_eq!(error_norm(&same, &same, &grid, &fine).unwrap(), 0.0);
        // Constant in time: Σ Δt = T = 1, so the norm is the H¹ norm.
        let e = error_norm(&same, &zero, &grid, &fine).unwrap();
        assert!((e - h1_norm_squared(&fine, &v).sqrt()).abs() < 1e-13);
        let double = traj(0.125, 8, |_| v.iter().map(|x| 2.0 * x).collect());
        assert!((error_norm(&double, &zero, &grid, &fine).unwrap() - 2.0 * e).abs() < 1e-13);
        // The n = 0 term is excluded.
        let only_first = traj(0.125, 8, |i| if i == 0 { v.clone() } else { vec![0.0; n] });
        assert_eq!(error_norm(&only_first, &zero, &grid, &fine).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let mesh = build_mesh(2).unwrap();
        let fine = FineDiscretization::new(&mesh, BoundarySpec::LeftEdge, &CoefficientField::constant(1.0).unwrap()).unwrap();
        let n = fine.n_dofs();
        let coarse = traj(0.1, 10, |_| vec![0.0; n]);
        let reference = traj(0.03, 40, |_| vec![0.0; n]);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        assert!(matches!(error_norm(&coarse, &reference, &grid, &fine), Err(Error::TimeGridMismatch(_))));
        let fine_ref = traj(0.025, 40, |_| vec![0.0; n]);
        assert_eq!(error_norm(&coarse, &fine_ref, &grid, &fine).unwrap(), 0.0);
    }
}
