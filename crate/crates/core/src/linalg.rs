//! Dense complex linear algebra on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Above this size operator norms switch from full decomposition to power iteration.
pub const FULL_DECOMPOSITION_LIMIT: usize = 4096;
const POWER_TOLERANCE: f64 = 1e-8;
const POWER_MAX_ITERATIONS: usize = 10_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// max |M − M*|.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn to_faer(m: &CMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
/// Only the lower triangle is read.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig =
        to_faer(m).self_adjoint_eigen(faer::Side::Lower).expect("Hermitian eigensolver converges on finite input");
    let s = eig.S();
    let values = (0..n).map(|k| s[k].re).collect();
    (values, from_faer(eig.U()))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    to_faer(m).self_adjoint_eigenvalues(faer::Side::Lower).expect("Hermitian eigensolver converges on finite input")
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> Result<f64> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        return Ok(0.0);
    }
    if m.nrows().max(m.ncols()) > FULL_DECOMPOSITION_LIMIT {
        return power_norm(m);
    }
    if m.is_square() && hermitian_defect(m) <= 1e-14 * scale {
        let values = hermitian_eigenvalues(m);
        return Ok(values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
    }
    let values = to_faer(m).singular_values().map_err(|e| Error::Factorization(format!("singular values: {e:?}")))?;
    Ok(values.iter().fold(0.0f64, |acc, s| acc.max(*s)))
}

/// Power iteration on M*M.
pub fn power_norm(m: &CMatrix) -> Result<f64> {
    let n = m.ncols();
    // Deterministic, non-degenerate start vector.
    let mut v = nalgebra::DVector::from_fn(n, |i, _| c(1.0 + (i as f64 * 0.618_033_988_75).fract(), 0.0));
    v /= c(v.norm(), 0.0);
    let mut estimate = 0.0;
    let mut change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERATIONS {
        let w = m.adjoint() * (m * &v);
        let next = w.norm().sqrt();
        if next == 0.0 {
            return Ok(0.0);
        }
        change = (next - estimate).abs() / next;
        estimate = next;
        let scale = w.norm();
        v = w / c(scale, 0.0);
        if change < POWER_TOLERANCE {
            return Ok(estimate);
        }
    }
    Err(Error::PowerIteration { iterations: POWER_MAX_ITERATIONS, estimate, change })
}

/// Inverse by LU with partial pivoting.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    use faer::linalg::solvers::DenseSolveCore;
    let inv = from_faer(to_faer(m).partial_piv_lu().inverse().as_ref());
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Factorization("singular matrix in LU inverse".into()));
    }
    Ok(inv)
}

/// Dense product a·b through the blocked kernel (nalgebra's complex product is unblocked).
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    from_faer((to_faer(a) * to_faer(b)).as_ref())
}

/// Identity of size n.
pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Rank-one projector onto the constants in the grid inner product: P = (1/n) J.
pub fn constant_projector(n: usize) -> CMatrix {
    CMatrix::from_element(n, n, c(1.0 / n as f64, 0.0))
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
