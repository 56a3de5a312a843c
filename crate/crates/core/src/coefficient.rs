//! Scalar rough coefficients A(x) and their per-element sampling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::StructuredQuadMesh;

/// Finest variation scale of the Example 2 coefficient (the `⌊64 x₂⌋` factor).
pub const EXAMPLE2_RESOLUTION: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    Example2,
    SyntheticCheckerboard {
        seed: u64,
        epsilon: f64,
        alpha: f64,
        beta: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    kind: CoefficientKind,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    /// Checkerboard cell values, lexicographic on the ε-grid.
    cells: Vec<f64>,
}

/// The layered Example 2 coefficient
/// `1.9·(⌊2x₁⌋⌊8(1−x₁)⌋+⌊2(1−x₁)⌋⌊8x₁⌋)·(same in x₂)·sin²(⌊32x₁⌋)·sin²(⌊64x₂⌋) + 1`.
pub fn example2_eval(x1: f64, x2: f64) -> f64 {
    let layer = |x: f64| (2.0 * x).floor() * (8.0 * (1.0 - x)).floor() + (2.0 * (1.0 - x)).floor() * (8.0 * x).floor();
    let s1 = (32.0 * x1).floor().sin();
    let s2 = (64.0 * x2).floor().sin();
    1.9 * layer(x1) * layer(x2) * s1 * s1 * s2 * s2 + 1.0
}

/// Returns `k` when `x == 2^-k` (to round-off).
fn dyadic_exponent(x: f64) -> Option<u32> {
    if !(x > 0.0 && x <= 1.0) {
        return None;
    }
    let k = (-x.log2()).round();
    if (x - 2f64.powf(-k)).abs() <= 1e-12 * x {
        Some(k as u32)
    } else {
        None
    }
}

/// Piecewise-constant field on an ε-grid with i.i.d. uniform values in `[alpha, beta]`.
pub fn synthetic_checkerboard(seed: u64, epsilon: f64, alpha: f64, beta: f64) -> Result<CoefficientField> {
    if !(alpha > 0.0 && beta >= alpha && beta.is_finite()) {
        return Err(Error::Argument(format!("invalid bounds alpha={alpha}, beta={beta}")));
    }
    let k = dyadic_exponent(epsilon)
        .ok_or_else(|| Error::Argument(format!("epsilon {epsilon} is not a dyadic fraction 2^-k")))?;
    if k > crate::mesh::MAX_LEVEL {
        return Err(Error::Capacity(format!("epsilon {epsilon} is finer than the finest mesh")));
    }
    let m = 1usize << k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (0..m * m)
        .map(|_| if alpha == beta { alpha } else { rng.random_range(alpha..=beta) })
        .collect();
    Ok(CoefficientField {
        kind: CoefficientKind::SyntheticCheckerboard {
            seed,
            epsilon,
            alpha,
            beta,
        },
        alpha,
        beta,
        epsilon,
        cells,
    })
}

impl CoefficientField {
    pub fn example2() -> Self {
        Self {
            kind: CoefficientKind::Example2,
            alpha: 1.0,
            beta: 17.78,
            // Nominal oscillation scale; the resolution requirement is EXAMPLE2_RESOLUTION.
            epsilon: 0.02,
            cells: Vec::new(),
        }
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Argument(format!("constant coefficient {value} must be positive")));
        }
        Ok(Self {
            kind: CoefficientKind::Constant { value },
            alpha: value,
            beta: value,
            epsilon: 1.0,
            cells: Vec::new(),
        })
    }

    pub fn from_kind(kind: &CoefficientKind) -> Result<Self> {
        match *kind {
            CoefficientKind::Example2 => Ok(Self::example2()),
            CoefficientKind::SyntheticCheckerboard {
                seed,
                epsilon,
                alpha,
                beta,
            } => synthetic_checkerboard(seed, epsilon, alpha, beta),
            CoefficientKind::Constant { value } => Self::constant(value),
        }
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Largest mesh cell side that represents the field exactly, if any is needed.
    pub fn resolution(&self) -> Option<f64> {
        match self.kind {
            CoefficientKind::Example2 => Some(EXAMPLE2_RESOLUTION),
            CoefficientKind::SyntheticCheckerboard { epsilon, .. } => Some(epsilon),
            CoefficientKind::Constant { .. } => None,
        }
    }

    /// Point evaluation on half-open cells, `x ∈ [0,1)²`.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self.kind {
            CoefficientKind::Example2 => example2_eval(x1, x2),
            CoefficientKind::Constant { value } => value,
            CoefficientKind::SyntheticCheckerboard { epsilon, .. } => {
                let m = (1.0 / epsilon).round() as usize;
                let i = ((x1 * m as f64).floor() as usize).min(m - 1);
                let j = ((x2 * m as f64).floor() as usize).min(m - 1);
                self.cells[j * m + i]
            }
        }
    }
}

/// One value per element: the field at the element midpoint.
pub fn sample_to_mesh(field: &CoefficientField, mesh: &StructuredQuadMesh) -> Result<Vec<f64>> {
    if let Some(required) = field.resolution() {
        if mesh.cell_side() > required * (1.0 + 1e-12) {
            return Err(Error::Resolution {
                cell_side: mesh.cell_side(),
                required,
            });
        }
    }
    Ok((0..mesh.n_elems())
        .map(|e| {
            let (x, y) = mesh.elem_midpoint(e);
            field.eval(x, y)
        })
        .collect())
}

/// Averages fine element values over each coarse element.
pub fn coarsen_by_averaging(values: &[f64], fine: &StructuredQuadMesh, coarse: &StructuredQuadMesh) -> Result<Vec<f64>> {
    let r = coarse.ratio_to(fine)?;
    if values.len() != fine.n_elems() {
        return Err(Error::Argument("coefficient length does not match the fine mesh".into()));
    }
    Ok((0..coarse.n_elems())
        .map(|t| coarse.fine_elems_in(fine, t).iter().map(|&e| values[e]).sum::<f64>() / (r * r) as f64)
        .collect())
}

/// SHA-256 of the little-endian bytes of the sampled values.
pub fn content_hash(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Writes element values as CSV, one mesh row per line (row `j` holds elements `(0..n, j)`).
pub fn write_csv<W: Write>(values: &[f64], mesh: &StructuredQuadMesh, mut w: W) -> std::io::Result<()> {
    let n = mesh.per_side();
    for j in 0..n {
        let row: Vec<String> = (0..n).map(|i| format!("{}", values[mesh.elem_id(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn example2_point_values() {
        assert_eq!(example2_eval(0.1, 0.1), 1.0);
        // 1.9 * 3 * 3 * sin²(19) sin²(38) + 1
        let want = 1.9 * 9.0 * 19f64.sin().powi(2) * 38f64.sin().powi(2) + 1.0;
        assert!((example2_eval(0.6, 0.6) - want).abs() < 1e-14);
        assert!((example2_eval(0.6, 0.6) - 1.03374).abs() < 1e-5);
    }

    #[test]
    fn example2_bounds_on_grid() {
        for a in 0..100 {
            for b in 0..100 {
                let v = example2_eval(a as f64 / 100.0 + 0.0037, b as f64 / 100.0 + 0.0041);
                assert!((1.0..=18.1).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn example2_level8_extremes() {
        let mesh = build_mesh(8).unwrap();
        let vals = sample_to_mesh(&CoefficientField::example2(), &mesh).unwrap();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(0.0, f64::max);
        assert_eq!(min, 1.0);
        assert!((max - 17.78).abs() < 5e-3, "{max}");
        let e = (0..mesh.n_elems())
            .find(|&e| {
                let (x, y) = mesh.elem_origin(e);
                x <= 0.1 && 0.1 < x + mesh.cell_side() && y <= 0.1 && 0.1 < y + mesh.cell_side()
            })
            .unwrap();
        assert_eq!(vals[e], 1.0);
    }

    #[test]
    fn example2_needs_resolution() {
        let err = sample_to_mesh(&CoefficientField::example2(), &build_mesh(5).unwrap());
        assert!(matches!(err, Err(Error::Resolution { .. })));
        assert!(sample_to_mesh(&CoefficientField::example2(), &build_mesh(6).unwrap()).is_ok());
    }

    #[test]
    fn checkerboard_properties() {
        let c = synthetic_checkerboard(1, 0.25, 1.0, 1.0).unwrap();
        assert!(sample_to_mesh(&c, &build_mesh(3).unwrap()).unwrap().iter().all(|&v| v == 1.0));
        let a = synthetic_checkerboard(42, 1.0 / 128.0, 0.04, 1.96).unwrap();
        let b = synthetic_checkerboard(42, 1.0 / 128.0, 0.04, 1.96).unwrap();
        assert_eq!(a, b);
        let vals = sample_to_mesh(&a, &build_mesh(7).unwrap()).unwrap();
        assert!(vals.iter().all(|&v| (0.04..=1.96).contains(&v)));
        assert!(vals.iter().any(|&v| v != vals[0]));
        assert!(synthetic_checkerboard(1, 0.006, 0.04, 1.96).is_err());
        assert!(synthetic_checkerboard(1, 0.25, 0.0, 1.0).is_err());
        assert!(matches!(sample_to_mesh(&a, &build_mesh(6).unwrap()), Err(Error::Resolution { .. })));
    }

    #[test]
    fn refinement_consistent_sampling() {
        let field = synthetic_checkerboard(3, 1.0 / 16.0, 0.5, 2.0).unwrap();
        let m4 = build_mesh(4).unwrap();
        let m6 = build_mesh(6).unwrap();
        let coarse_vals = sample_to_mesh(&field, &m4).unwrap();
        let fine_vals = sample_to_mesh(&field, &m6).unwrap();
        for e in 0..m6.n_elems() {
            assert_eq!(fine_vals[e], coarse_vals[m4.parent_of(&m6, e)]);
        }
        let back = coarsen_by_averaging(&fine_vals, &m6, &m4).unwrap();
        for (a, b) in back.iter().zip(&coarse_vals) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_layout_and_hash() {
        let m = build_mesh(1).unwrap();
        let vals = [1.0, 2.0, 3.0, 4.0];
        let mut buf = Vec::new();
        write_csv(&vals, &m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,2\n3,4\n");
        assert_eq!(content_hash(&vals), content_hash(&vals.clone()));
        assert_ne!(content_hash(&vals), content_hash(&[1.0, 2.0, 3.0, 4.5]));
    }
}
