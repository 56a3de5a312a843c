//! Direct solvers: sparse Cholesky for SPD systems and block elimination for
//! the constrained (saddle-point) corrector systems.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt as SparseLlt;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use super::sparse::{dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// faer's internal parallel kernels are switched off; parallelism happens at
/// the level of independent solves instead, which keeps results reproducible.
fn ensure_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Reusable Cholesky factorization of a sparse SPD matrix.
pub struct SpdSolver {
    n: usize,
    llt: SparseLlt<usize, f64>,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver").field("n", &self.n).finish()
    }
}

/// Factorizes a symmetric positive definite matrix. `name` is reported on failure.
pub fn factor_spd(a: &CsrMatrix, name: &str) -> Result<SpdSolver> {
    ensure_sequential();
    if a.nrows() != a.ncols() {
        return Err(Error::Argument(format!("matrix `{name}` is not square")));
    }
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Argument(format!("matrix `{name}` is empty")));
    }
    // For a symmetric matrix the CSR arrays are also valid CSC arrays.
    let symbolic = SymbolicSparseColMatRef::new_checked(n, n, a.indptr(), None, a.indices());
    let view = SparseColMatRef::new(symbolic, a.data());
    let llt = view.sp_cholesky(Side::Lower).map_err(|_| Error::NotSpd {
        matrix: name.to_string(),
    })?;
    Ok(SpdSolver { n, llt })
}

/// One-shot SPD solve.
pub fn solve_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(factor_spd(a, "A")?.solve(b))
}

impl SpdSolver {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "solve: dimension mismatch");
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(m.as_mut());
        for (i, x) in b.iter_mut().enumerate() {
            *x = m[(i, 0)];
        }
    }

    /// Solves for several right-hand sides at once (columns of `b`).
    pub fn solve_block(&self, b: &mut Mat<f64>) {
        assert_eq!(b.nrows(), self.n, "solve_block: dimension mismatch");
        self.llt.solve_in_place(b.as_mut());
    }
}

/// Solver for `[K Cᵀ; C 0] [x; λ] = [r; g]` with `K` SPD and `C` of full row rank.
///
/// Eliminates `x` through `K⁻¹` and factorizes the dense Schur complement
/// `S = C K⁻¹ Cᵀ`.
pub struct SaddlePointSolver {
    k: SpdSolver,
    c: CsrMatrix,
    kinv_ct: Mat<f64>,
    schur: faer::linalg::solvers::Llt<f64>,
}

impl std::fmt::Debug for SaddlePointSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddlePointSolver")
            .field("dofs", &self.k.dim())
            .field("constraints", &self.c.nrows())
            .finish()
    }
}

/// Relative pivot size below which the Schur complement is treated as singular.
const SCHUR_PIVOT_TOL: f64 = 1e-12;

/// Returns `None` when the constraint block is rank deficient.
pub fn factor_saddle(k: &CsrMatrix, c: &CsrMatrix, name: &str) -> Result<Option<SaddlePointSolver>> {
    if c.ncols() != k.nrows() {
        return Err(Error::Argument(format!(
            "constraint matrix has {} columns, `{name}` has {} rows",
            c.ncols(),
            k.nrows()
        )));
    }
    let ksolve = factor_spd(k, name)?;
    let (n, m) = (k.nrows(), c.nrows());
    let ct = c.transpose();
    let mut kinv_ct = Mat::<f64>::zeros(n, m);
    for i in 0..n {
        let (cols, vals) = ct.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            kinv_ct[(i, j)] = v;
        }
    }
    ksolve.solve_block(&mut kinv_ct);
    let mut s = Mat::<f64>::zeros(m, m);
    for r in 0..m {
        let (cols, vals) = c.row(r);
        for q in 0..m {
            s[(r, q)] = cols.iter().zip(vals).map(|(&i, &v)| v * kinv_ct[(i, q)]).sum();
        }
    }
    // Symmetrize away round-off before factorizing.
    for r in 0..m {
        for q in r + 1..m {
            let avg = 0.5 * (s[(r, q)] + s[(q, r)]);
            s[(r, q)] = avg;
            s[(q, r)] = avg;
        }
    }
    let max_diag = (0..m).fold(0.0f64, |a, i| a.max(s[(i, i)]));
    if m > 0 && max_diag <= 0.0 {
        return Ok(None);
    }
    let schur = match s.llt(Side::Lower) {
        Ok(f) => f,
        Err(_) => return Ok(None),
    };
    let l = schur.L();
    let min_pivot = (0..m).fold(f64::INFINITY, |a, i| a.min(l[(i, i)] * l[(i, i)]));
    if m > 0 && min_pivot < SCHUR_PIVOT_TOL * max_diag {
        return Ok(None);
    }
    Ok(Some(SaddlePointSolver {
        k: ksolve,
        c: c.clone(),
        kinv_ct,
        schur,
    }))
}

impl SaddlePointSolver {
    pub fn dofs(&self) -> usize {
        self.k.dim()
    }

    pub fn constraints(&self) -> usize {
        self.c.nrows()
    }

    /// Returns `(x, λ)`.
    pub fn solve(&self, r: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.c.nrows();
        assert_eq!(g.len(), m, "saddle solve: constraint rhs mismatch");
        let y = self.k.solve(r);
        let cy = self.c.matvec(&y);
        let mut lam = Mat::<f64>::from_fn(m, 1, |i, _| cy[i] - g[i]);
        self.schur.solve_in_place(lam.as_mut());
        let mut x = y;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut acc = 0.0;
            for q in 0..m {
                acc += self.kinv_ct[(i, q)] * lam[(q, 0)];
            }
            *xi -= acc;
        }
        let lambda = (0..m).map(|q| lam[(q, 0)]).collect();
        (x, lambda)
    }
}

/// Relative residual of the saddle-point system for a candidate solution.
pub fn saddle_residual(k: &CsrMatrix, c: &CsrMatrix, x: &[f64], lambda: &[f64], r: &[f64], g: &[f64]) -> f64 {
    let mut top = k.matvec(x);
    let ctl = c.transpose_matvec(lambda);
    for i in 0..top.len() {
        top[i] += ctl[i] - r[i];
    }
    let bottom: Vec<f64> = c.matvec(x).iter().zip(g).map(|(a, b)| a - b).collect();
    let num = (dot(&top, &top) + dot(&bottom, &bottom)).sqrt();
    let scale = (dot(r, r) + dot(g, g)).sqrt().max(norm2(&k.matvec(x)));
    if scale == 0.0 {
        num
    } else {
        num / scale
    }
}
