//! Discretized fiber operators 𝔸(ξ), 𝔸₀(ξ), the effective fiber 𝔸⁰(ξ), resolvents
//! and quadratic-form diagnostics.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{KernelSpec, MuSpec};
use crate::linalg::{c, hermitian_eigenvalues, identity, max_abs, CMatrix};
use crate::table::KernelTable;

pub use crate::grid::make_grid;
pub use crate::linalg::operator_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberKind {
    Full,
    MuOne,
    Effective,
    Truncated { level: f64 },
}

/// A Hermitian matrix representing a fiber operator at quasimomentum ξ.
#[derive(Debug, Clone)]
pub struct FiberOperator {
    pub xi: Vec<f64>,
    pub matrix: CMatrix,
    /// Multiplication part p(x); empty for the effective fiber.
    pub potential: Vec<f64>,
    pub kind: FiberKind,
}

/// Kernel, modulation and grid together with the quantities shared by every
/// fiber: the cell-averaged kernel table, the node values of μ and p.
#[derive(Debug, Clone)]
pub struct FiberModel {
    kernel: KernelSpec,
    mu: MuSpec,
    grid: Grid,
    table: KernelTable,
    mu_values: DMatrix<f64>,
    kernel_at_zero: Vec<f64>,
    potential: Vec<f64>,
}

impl FiberModel {
    pub fn new(kernel: &KernelSpec, mu: &MuSpec, grid: Grid) -> Result<Self> {
        if kernel.dim() != grid.dim() || mu.dim() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "kernel d={}, mu d={}, grid d={}",
                kernel.dim(),
                mu.dim(),
                grid.dim()
            )));
        }
        let table = KernelTable::build(kernel, &grid)?;
        let n = grid.len();
        let d = grid.dim();
        let mu_values = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = (grid.node(i), grid.node(j));
            mu.value(&x[..d], &y[..d])
        });
        let kernel_at_zero = table.periodized_at_zero();
        let h = grid.weight();
        let potential = (0..n)
            .map(|i| h * (0..n).map(|j| kernel_at_zero[grid.residue(i, j)] * mu_values[(i, j)]).sum::<f64>())
            .collect();
        Ok(Self { kernel: kernel.clone(), mu: mu.clone(), grid, table, mu_values, kernel_at_zero, potential })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn mu(&self) -> &MuSpec {
        &self.mu
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    /// μ(x_i, x_j) at grid nodes.
    pub fn mu_values(&self) -> &DMatrix<f64> {
        &self.mu_values
    }

    /// ã_h(0, z_r) by residue.
    pub fn kernel_at_zero(&self) -> &[f64] {
        &self.kernel_at_zero
    }

    /// p(x) = ∫_Ω ã(0,x−y) μ(x,y) dy at the nodes.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Matrix with entries scale·h·k(x_i − x_j)·μ(x_i, x_j) for residue-indexed k.
    pub fn integral_matrix(&self, per_residue: &[Complex64], scale: Complex64) -> CMatrix {
        let h = self.grid.weight();
        let n = self.grid.len();
        CMatrix::from_fn(n, n, |i, j| scale * h * self.mu_values[(i, j)] * per_residue[self.grid.residue(i, j)])
    }

    fn real_integral_matrix(&self, per_residue: &[f64], scale: Complex64) -> CMatrix {
        let complex: Vec<Complex64> = per_residue.iter().map(|v| c(*v, 0.0)).collect();
        self.integral_matrix(&complex, scale)
    }

    /// 𝔸(ξ) = p − 𝔹(ξ).
    pub fn assemble(&self, xi: &[f64]) -> Result<FiberOperator> {
        self.check_xi(xi)?;
        let mut m = self.integral_matrix(&self.table.periodized(xi), c(-1.0, 0.0));
        for (i, p) in self.potential.iter().enumerate() {
            m[(i, i)] += p;
        }
        Ok(FiberOperator { xi: xi.to_vec(), matrix: m, potential: self.potential.clone(), kind: FiberKind::Full })
    }

    /// 𝔸₀(ξ): the same kernel with μ ≡ 1.
    pub fn assemble_mu_one(&self, xi: &[f64]) -> Result<FiberOperator> {
        self.check_xi(xi)?;
        let h = self.grid.weight();
        let n = self.grid.len();
        let values = self.table.periodized(xi);
        let p0 = h * self.kernel_at_zero.iter().sum::<f64>();
        let m = CMatrix::from_fn(n, n, |i, j| {
            let off = -h * values[self.grid.residue(i, j)];
            if i == j {
                off + p0
            } else {
                off
            }
        });
        Ok(FiberOperator { xi: xi.to_vec(), matrix: m, potential: vec![p0; n], kind: FiberKind::MuOne })
    }

    /// 𝔸(ξ) − 𝔸(0), computed without cancellation.
    pub fn increment(&self, xi: &[f64]) -> Result<CMatrix> {
        self.check_xi(xi)?;
        Ok(self.integral_matrix(&self.table.periodized_increment(xi), c(-1.0, 0.0)))
    }

    /// ∂^α𝔸(0): kernel (−1)(−i)^{|α|} Σ (z+n)^α a(z+n) μ, cell-averaged.
    pub fn derivative(&self, alpha: &[usize]) -> Result<CMatrix> {
        let d = self.grid.dim();
        if alpha.len() != d {
            return Err(Error::DimensionMismatch("multi-index length differs from dimension".into()));
        }
        let order: usize = alpha.iter().sum();
        if order > 4 {
            return Err(Error::DerivativeOrder(order));
        }
        let weights = self.table.weighted(|t| (0..d).map(|i| t[i].powi(alpha[i] as i32)).product());
        Ok(self.real_integral_matrix(&weights, -minus_i_power(order)))
    }

    /// [Δ_k𝔸](ξ) = (1/k!) Σ_{|α|=k} (k!/α!) ∂^α𝔸(0) ξ^α, the k-th Taylor term at 0.
    pub fn taylor_term(&self, xi: &[f64], order: usize) -> Result<CMatrix> {
        self.check_xi(xi)?;
        let d = self.grid.dim();
        let factorial: f64 = (1..=order).map(|k| k as f64).product();
        let weights = self.table.weighted(|t| (0..d).map(|i| xi[i] * t[i]).sum::<f64>().powi(order as i32));
        Ok(self.real_integral_matrix(&weights, -minus_i_power(order) / factorial))
    }

    fn check_xi(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ξ has {} components, grid dimension is {}",
                xi.len(),
                self.grid.dim()
            )));
        }
        Ok(())
    }
}

/// (−i)^k.
fn minus_i_power(k: usize) -> Complex64 {
    match k % 4 {
        0 => c(1.0, 0.0),
        1 => c(0.0, -1.0),
        2 => c(-1.0, 0.0),
        _ => c(0.0, 1.0),
    }
}

/// p(x) on the grid.
pub fn potential_p(model: &FiberModel) -> Vec<f64> {
    model.potential().to_vec()
}

/// 𝔸(ξ) on the grid.
pub fn assemble_fiber(model: &FiberModel, xi: &[f64]) -> Result<FiberOperator> {
    model.assemble(xi)
}

/// Fourier symbol ⟨g⁰(2πn+ξ), 2πn+ξ⟩ over the grid modes.
pub fn effective_symbol(g0: &DMatrix<f64>, grid: &Grid, xi: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.len())
        .map(|idx| {
            let n = grid.mode(idx);
            let k: Vec<f64> = (0..d).map(|i| 2.0 * PI * n[i] as f64 + xi[i]).collect();
            (0..d).map(|a| (0..d).map(|b| g0[(a, b)] * k[a] * k[b]).sum::<f64>()).sum()
        })
        .collect()
}

/// Matrix of the Fourier multiplier with the given symbol (indexed by DFT index).
/// It is circulant: entry (i, j) depends only on x_i − x_j.
pub fn fourier_multiplier(grid: &Grid, symbol: &[Complex64]) -> CMatrix {
    let mut column = symbol.to_vec();
    grid.dft_in_place(&mut column, true);
    let scale = 1.0 / grid.len() as f64;
    let n = grid.len();
    CMatrix::from_fn(n, n, |i, j| column[grid.residue(i, j)] * scale)
}

/// 𝔸⁰(ξ) = (D+ξ)* g⁰ (D+ξ) realized in the discrete Fourier basis.
pub fn assemble_effective_fiber(g0: &DMatrix<f64>, grid: &Grid, xi: &[f64]) -> Result<FiberOperator> {
    let d = grid.dim();
    if g0.nrows() != d || g0.ncols() != d || xi.len() != d {
        return Err(Error::DimensionMismatch("effective matrix, grid and ξ dimensions differ".into()));
    }
    let min_eig = g0.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(min_eig));
    }
    let symbol: Vec<Complex64> = effective_symbol(g0, grid, xi).into_iter().map(|s| c(s, 0.0)).collect();
    Ok(FiberOperator {
        xi: xi.to_vec(),
        matrix: fourier_multiplier(grid, &symbol),
        potential: Vec::new(),
        kind: FiberKind::Effective,
    })
}

/// (M + shift·I)^{-1} by Cholesky; the residual is checked.
pub fn resolvent(op: &FiberOperator, shift: f64) -> Result<CMatrix> {
    resolvent_of(&op.matrix, shift)
}

pub fn resolvent_of(m: &CMatrix, shift: f64) -> Result<CMatrix> {
    if !(shift > 0.0) {
        return Err(Error::InvalidArgument(format!("resolvent shift must be positive (got {shift})")));
    }
    let n = m.nrows();
    let shifted = m + identity(n) * c(shift, 0.0);
    let chol = shifted
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("Cholesky failed: shifted operator is not positive definite".into()))?;
    let inv = chol.inverse();
    let residual = max_abs(&(&shifted * &inv - identity(n))) * (n as f64).sqrt();
    if residual > 1e-9 {
        return Err(Error::ResolventResidual(residual));
    }
    Ok(inv)
}

/// ⟨Mu, u⟩ in the grid inner product.
pub fn grid_form(m: &CMatrix, u: &[Complex64], weight: f64) -> Complex64 {
    let n = u.len();
    let mut acc = c(0.0, 0.0);
    for i in 0..n {
        let row: Complex64 = (0..n).map(|j| m[(i, j)] * u[j]).sum();
        acc += row * u[i].conj();
    }
    acc * weight
}

/// Compares ⟨𝔸(ξ)u,u⟩ with the double-integral form
/// ½∫_Ω∫_{ℝᵈ} a(x−y)μ(x,y)|e^{i⟨ξ,x⟩}u(x) − e^{i⟨ξ,y⟩}u(y)|² dy dx, evaluated pair by
/// pair and quadrature point by quadrature point. Returns |form − ⟨Mu,u⟩| / ‖u‖².
pub fn quadratic_form_check(model: &FiberModel, op: &FiberOperator, u: &[Complex64]) -> Result<f64> {
    let grid = model.grid();
    let n = grid.len();
    if u.len() != n || op.matrix.nrows() != n {
        return Err(Error::DimensionMismatch("quadratic form: vector length differs from grid".into()));
    }
    let d = grid.dim();
    let h = grid.weight();
    let xi = &op.xi;
    let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() * h;
    if norm2 == 0.0 {
        return Err(Error::InvalidArgument("u must be nonzero".into()));
    }
    let table = model.table();
    // y = y_j + n with t = x − y the kernel argument, so e^{i⟨ξ,y−x⟩} = e^{−i⟨ξ,t⟩}.
    let mut form = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mu = model.mu_values()[(i, j)];
            let r = grid.residue(i, j);
            let pair: f64 = table
                .residue_points(r)
                .iter()
                .map(|p| {
                    let phase: f64 = (0..d).map(|k| xi[k] * p.t[k]).sum();
                    p.weight * (u[i] - Complex64::from_polar(1.0, -phase) * u[j]).norm_sqr()
                })
                .sum();
            form += mu * pair;
        }
    }
    form *= 0.5 * h * h;
    let matrix_form = grid_form(&op.matrix, u, h);
    Ok((form - matrix_form.re).abs().max(matrix_form.im.abs()) / norm2)
}

/// 𝐀_N: the ξ = 0 operator built from min(ã(0,·), level).
pub fn assemble_truncated(model: &FiberModel, level: f64) -> Result<FiberOperator> {
    if !(level > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation level must be positive (got {level})")));
    }
    let grid = model.grid();
    let n = grid.len();
    let h = grid.weight();
    let truncated: Vec<f64> = model.kernel_at_zero().iter().map(|v| v.min(level)).collect();
    let potential: Vec<f64> = (0..n)
        .map(|i| h * (0..n).map(|j| truncated[grid.residue(i, j)] * model.mu_values()[(i, j)]).sum::<f64>())
        .collect();
    let mut m = model.real_integral_matrix(&truncated, c(-1.0, 0.0));
    for (i, p) in potential.iter().enumerate() {
        m[(i, i)] += p;
    }
    Ok(FiberOperator { xi: vec![0.0; grid.dim()], matrix: m, potential, kind: FiberKind::Truncated { level } })
}

/// Empirical quadrature tolerance τ_q(N): largest change of the discrete spectral
/// data (second eigenvalue at ξ=0, lowest eigenvalue at a probe ξ, mean potential)
/// when the resolution is doubled, with a floor for round-off.
pub fn quadrature_tolerance(kernel: &KernelSpec, mu: &MuSpec, grid: &Grid) -> Result<f64> {
    let coarse = FiberModel::new(kernel, mu, *grid)?;
    let fine_grid = Grid::new(grid.dim(), 2 * grid.n())?;
    let fine = FiberModel::new(kernel, mu, fine_grid)?;
    let mut probe = vec![0.0; grid.dim()];
    probe[0] = 0.5;
    let data = |model: &FiberModel| -> Result<[f64; 3]> {
        let at_zero = hermitian_eigenvalues(&model.assemble(&vec![0.0; grid.dim()])?.matrix);
        let at_probe = hermitian_eigenvalues(&model.assemble(&probe)?.matrix);
        let p = model.potential();
        Ok([at_zero[1], at_probe[0], p.iter().sum::<f64>() / p.len() as f64])
    };
    let (a, b) = (data(&coarse)?, data(&fine)?);
    let change = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(change + 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::moment;
    use crate::linalg::hermitian_defect;

    fn box_model(n: usize, mu: MuSpec) -> FiberModel {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        FiberModel::new(&k, &mu, Grid::new(1, n).unwrap()).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel_at_zero() {
        let model = box_model(32, MuSpec::constant(1, 1.0).unwrap());
        let op = model.assemble(&[0.0]).unwrap();
        let ones = nalgebra::DVector::from_element(32, c(1.0, 0.0));
        assert!((&op.matrix * ones).norm() < 1e-13);
        let values = hermitian_eigenvalues(&op.matrix);
        assert!(values[0].abs() < 1e-13 && values.iter().all(|v| *v > -1e-13));
        assert!(op.matrix.iter().all(|z| z.im.abs() < 1e-15));
    }

    #[test]
    fn potential_bounds() {
        let model = box_model(32, MuSpec::cosine_product(1, 1.0, 0.5).unwrap());
        for p in model.potential() {
            assert!(*p >= 0.5 - 1e-12 && *p <= 1.5 + 1e-12);
        }
        let k = KernelSpec::gaussian(1, 0.3, 1.0).unwrap();
        let flat = MuSpec::tabulated(1, 4, vec![2.0; 16], None).unwrap();
        let model = FiberModel::new(&k, &flat, Grid::new(1, 16).unwrap()).unwrap();
        for p in model.potential() {
            assert!((p - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_for_nonzero_xi() {
        let model = box_model(16, MuSpec::cosine_product(1, 1.0, 0.5).unwrap());
        let op = model.assemble(&[1.1]).unwrap();
        assert!(hermitian_defect(&op.matrix) <= 1e-12 * max_abs(&op.matrix));
    }

    #[test]
    fn effective_fiber_symbol_examples() {
        let grid = Grid::new(1, 16).unwrap();
        let g0 = DMatrix::from_element(1, 1, 0.5);
        let s = effective_symbol(&g0, &grid, &[0.0]);
        assert_eq!(s[0], 0.0);
        let s = effective_symbol(&g0, &grid, &[0.1]);
        assert!((s[1] - 0.5 * (2.0 * PI + 0.1f64).powi(2)).abs() < 1e-12);
        assert!((s[1] - 20.3725).abs() < 1e-3);
        let op = assemble_effective_fiber(&g0, &grid, &[0.1]).unwrap();
        let values = hermitian_eigenvalues(&op.matrix);
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in values.iter().zip(&sorted) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b));
        }
        assert!(assemble_effective_fiber(&DMatrix::from_element(1, 1, -1.0), &grid, &[0.0]).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let model = box_model(16, MuSpec::constant(1, 1.0).unwrap());
        let op = model.assemble(&[0.0]).unwrap();
        let r = resolvent(&op, 1.0).unwrap();
        let ones = nalgebra::DVector::from_element(16, c(1.0, 0.0));
        assert!((&r * &ones - &ones).norm() < 1e-12);
        let diag = FiberOperator {
            xi: vec![0.0],
            matrix: CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)])),
            potential: vec![],
            kind: FiberKind::Full,
        };
        let r = resolvent(&diag, 1.0).unwrap();
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-15 && (r[(1, 1)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!(resolvent(&diag, 0.0).is_err());
    }

    #[test]
    fn mu_one_spectrum_is_the_discrete_symbol() {
        // Circulant: eigenvalues are h Σ_r (ã(0,r) − ã(ξ,r) e^{2πi n z_r}).
        let model = box_model(32, MuSpec::constant(1, 1.0).unwrap());
        let xi = [0.7];
        let op = model.assemble_mu_one(&xi).unwrap();
        let grid = model.grid();
        let values = model.table().periodized(&xi);
        let p0: f64 = model.kernel_at_zero().iter().sum::<f64>() * grid.weight();
        let mut modes: Vec<f64> = (0..32)
            .map(|idx| {
                let n = grid.mode(idx)[0] as f64;
                let s: Complex64 =
                    (0..32).map(|r| values[r] * Complex64::from_polar(1.0, -2.0 * PI * n * grid.node(r)[0])).sum();
                p0 - grid.weight() * s.re
            })
            .collect();
        modes.sort_by(f64::total_cmp);
        let eig = hermitian_eigenvalues(&op.matrix);
        for (a, b) in eig.iter().zip(&modes) {
            assert!((a - b).abs() < 1e-12);
        }
        // Low modes approach the continuum symbol Â(2πn+ξ).
        let a = model.kernel();
        let lowest = crate::kernels::symbol_ahat(a, &xi).unwrap();
        assert!((eig[0] - lowest).abs() < 1e-3 * lowest);
        assert!(moment(a, 0).unwrap() == 1.0);
    }

    #[test]
    fn quadratic_form_agrees() {
        let model = box_model(16, MuSpec::cosine_product(1, 1.0, 0.5).unwrap());
        let u: Vec<Complex64> = (0..16).map(|k| c((k as f64).cos(), (0.3 * k as f64).sin())).collect();
        for xi in [0.0, 0.4, -2.0] {
            let op = model.assemble(&[xi]).unwrap();
            assert!(quadratic_form_check(&model, &op, &u).unwrap() < 1e-13);
        }
        let ones = vec![c(1.0, 0.0); 16];
        let op = model.assemble(&[0.0]).unwrap();
        assert!(quadratic_form_check(&model, &op, &ones).unwrap() < 1e-14);
    }

    #[test]
    fn truncation_is_inactive_above_the_maximum() {
        let k = KernelSpec::gaussian(1, 0.2, 1.0).unwrap();
        let model =
            FiberModel::new(&k, &MuSpec::cosine_product(1, 1.0, 0.3).unwrap(), Grid::new(1, 16).unwrap()).unwrap();
        let top = model.kernel_at_zero().iter().copied().fold(0.0, f64::max);
        let t = assemble_truncated(&model, top * 1.01).unwrap();
        let full = model.assemble(&[0.0]).unwrap();
        assert!(max_abs(&(&t.matrix - &full.matrix)) < 1e-15);
    }
}
