//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Determinant with a scale-aware nonzero verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantCheck {
    pub det: f64,
    /// Product of the Euclidean row norms, an upper bound for `|det|`.
    pub hadamard_bound: f64,
    pub nonzero: bool,
}

pub const DET_REL_TOL: f64 = 1e-10;

pub fn determinant_check(m: &DMatrix<f64>) -> DeterminantCheck {
    let det = if m.nrows() == 0 { 1.0 } else { m.clone().lu().determinant() };
    let hadamard_bound: f64 = m.row_iter().map(|r| r.norm()).product();
    let nonzero = hadamard_bound > 0.0 && det.abs() > DET_REL_TOL * hadamard_bound;
    DeterminantCheck { det, hadamard_bound, nonzero }
}

const SCHUR_ITERS_PER_ROW: usize = 200;
const SCHUR_RETRIES: usize = 6;

/// Eigenvalues of a square matrix.
///
/// The Francis iteration in nalgebra can stall on highly structured input
/// such as cyclic permutations, so the iteration count is bounded and a
/// stalled run is retried on an orthogonally similar matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("eigenvalues need a square matrix".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let max_iter = SCHUR_ITERS_PER_ROW * n;
    for attempt in 0..=SCHUR_RETRIES {
        let a = if attempt == 0 {
            m.clone()
        } else {
            let q = reflector(n, attempt);
            &q * m * &q
        };
        if let Some(schur) = Schur::try_new(a, f64::EPSILON, max_iter) {
            let eig = schur.complex_eigenvalues();
            if eig.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok(eig.iter().copied().collect());
            }
        }
    }
    Err(Error::EigenFailure(format!("QR iteration did not converge after {SCHUR_RETRIES} retries")))
}

/// Householder reflector `I - 2 v v^T` from a fixed irregular vector.
fn reflector(n: usize, seed: usize) -> DMatrix<f64> {
    let mut v = DVector::from_fn(n, |i, _| ((i + 1) as f64 * (0.7548776662 + seed as f64)).sin() + 0.1);
    v /= v.norm();
    DMatrix::identity(n, n) - &v * v.transpose() * 2.0
}

/// Right singular vector of the smallest singular value, with that value.
pub fn smallest_singular_pair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.ncols();
    // pad short matrices so the SVD exposes a full right basis
    let a = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    (sigma, v_t.row(idx).transpose())
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis of the numerical kernel.
pub fn kernel_basis(m: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let n = m.ncols();
    let a = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let max = svd.singular_values.max();
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| max == 0.0 || s <= rel_tol * max)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect()
}
