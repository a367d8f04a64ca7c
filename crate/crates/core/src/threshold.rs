//! Riesz projections at the bottom of the spectrum and the threshold expansion
//! 𝔸(ξ)F(ξ) ≈ [G]₂(ξ) + [G]₃(ξ), F(ξ) ≈ P + [F]₁(ξ).
//!
//! Small-ξ residuals such as 𝔸F − [G]₂ − [G]₃ = O(|ξ|⁴) drop far below the round-off
//! of a plain contour integral. The sweep therefore evaluates
//!
//!   F(ξ) − P = (1/2πi)∮ (𝔸(ξ)−ζ)^{-1} (𝔸(ξ)−𝔸(0)) (𝔸(0)−ζ)^{-1} dζ,
//!
//! whose integrand is proportional to the increment, and uses 𝔸F = λF with λ from a
//! Rayleigh quotient split into 𝔸(0) and increment parts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{CellSolution, CellSolver};
use crate::effective::EffectiveMatrix;
use crate::error::{Error, Result};
use crate::fiber::{FiberModel, FiberOperator};
use crate::linalg::{c, constant_projector, hermitian_eigen, identity, inverse, loglog_slope, matmul, CMatrix};

pub const MIN_CONTOUR_POINTS: usize = 64;
pub const DEFAULT_CONTOUR_POINTS: usize = 128;
const MAX_CONTOUR_POINTS: usize = 8192;
/// Idempotency defect at which contour doubling stops.
pub const IDEMPOTENCY_TARGET: f64 = 1e-9;
/// Number of smallest |ξ| used in slope fits.
pub const SLOPE_WINDOW: usize = 5;

/// Circle ζ = center + radius·e^{iθ}, traversed counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contour {
    pub center: f64,
    pub radius: f64,
    pub points: usize,
}

impl Contour {
    /// The circle around [0, d₀/3] through the midpoint of (d₀/3, 2d₀/3).
    pub fn around_threshold(d0: f64, points: usize) -> Result<Self> {
        if !(d0 > 0.0) {
            return Err(Error::InvalidArgument(format!("d0 must be positive (got {d0})")));
        }
        if points < MIN_CONTOUR_POINTS {
            return Err(Error::InvalidArgument(format!(
                "contour needs at least {MIN_CONTOUR_POINTS} points (got {points})"
            )));
        }
        Ok(Self { center: d0 / 6.0, radius: d0 / 3.0, points })
    }

    pub fn with_points(self, points: usize) -> Self {
        Self { points, ..self }
    }

    /// Forbidden band (d₀/3, 2d₀/3) that Γ crosses.
    pub fn band(&self) -> (f64, f64) {
        let d0 = 3.0 * self.radius;
        (d0 / 3.0, 2.0 * d0 / 3.0)
    }

    /// Quadrature nodes ζ_k with their phase factors e^{iθ_k}.
    pub fn nodes(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        (0..self.points).map(move |k| {
            let phase = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / self.points as f64);
            (self.center + self.radius * phase, phase)
        })
    }

    /// Trapezoid weight turning Σ f(ζ_k) e^{iθ_k} into (1/2πi)∮ f dζ.
    fn weight(&self) -> f64 {
        self.radius / self.points as f64
    }

    /// Rejects spectra that touch the band or put more than one eigenvalue inside.
    pub fn check_spectrum(&self, eigenvalues: &[f64]) -> Result<()> {
        let (lower, upper) = self.band();
        if let Some(&eigenvalue) = eigenvalues.iter().find(|v| **v > lower && **v < upper) {
            return Err(Error::ContourHitsSpectrum { eigenvalue, lower, upper });
        }
        let inside = eigenvalues.iter().filter(|v| (**v - self.center).abs() < self.radius).count();
        if inside != 1 {
            return Err(Error::ContourRank(inside));
        }
        Ok(())
    }
}

/// Result of a contour quadrature with the number of points actually used.
#[derive(Debug, Clone)]
pub struct ContourResult {
    pub matrix: CMatrix,
    pub points: usize,
    pub idempotency_defect: f64,
}

fn idempotency(f: &CMatrix) -> f64 {
    (matmul(f, f) - f).norm()
}

fn spectrum(m: &CMatrix) -> Vec<f64> {
    crate::linalg::hermitian_eigenvalues(m)
}

/// −(1/2πi)∮ (M − ζ)^{-1} g(ζ) dζ by the trapezoid rule.
fn contour_sum(m: &CMatrix, contour: &Contour, g: impl Fn(Complex64) -> Complex64) -> Result<CMatrix> {
    let n = m.nrows();
    let mut acc = CMatrix::zeros(n, n);
    for (zeta, phase) in contour.nodes() {
        let r = inverse(&(m - identity(n) * zeta))?;
        acc += r * (g(zeta) * phase);
    }
    Ok(acc * c(-contour.weight(), 0.0))
}

/// F(ξ) = −(1/2πi)∮ (𝔸(ξ)−ζ)^{-1} dζ. The number of points doubles until the
/// idempotency defect drops below 10⁻⁹.
pub fn riesz_projection(op: &FiberOperator, contour: &Contour) -> Result<ContourResult> {
    contour.check_spectrum(&spectrum(&op.matrix))?;
    let mut k = contour.points;
    loop {
        let f = contour_sum(&op.matrix, &contour.with_points(k), |_| c(1.0, 0.0))?;
        let defect = idempotency(&f);
        if defect < IDEMPOTENCY_TARGET {
            return Ok(ContourResult { matrix: f, points: k, idempotency_defect: defect });
        }
        if k >= MAX_CONTOUR_POINTS {
            return Err(Error::ContourAccuracy { points: k, defect });
        }
        k *= 2;
    }
}

/// 𝔸(ξ)F(ξ) = −(1/2πi)∮ (𝔸(ξ)−ζ)^{-1} ζ dζ, with the point count settled by
/// [`riesz_projection`].
pub fn riesz_af(op: &FiberOperator, contour: &Contour) -> Result<ContourResult> {
    let projection = riesz_projection(op, contour)?;
    let af = contour_sum(&op.matrix, &contour.with_points(projection.points), |z| z)?;
    Ok(ContourResult { matrix: af, ..projection })
}

/// Rank-one projector onto the lowest eigenvector, from a full eigendecomposition.
pub fn spectral_projector_oracle(op: &FiberOperator) -> (f64, CMatrix) {
    let (values, vectors) = hermitian_eigen(&op.matrix);
    let v = vectors.column(0).into_owned();
    (values[0], &v * v.adjoint())
}

/// [F]₁(ξ) = Σ_j ξ_j F_j with F_j = i(·,v_j)1 − i(·,1)v_j.
pub fn f1_operator(cell: &CellSolution, xi: &[f64]) -> Result<CMatrix> {
    let d = cell.dim();
    if xi.len() != d {
        return Err(Error::DimensionMismatch("ξ length differs from the cell dimension".into()));
    }
    let n = cell.v[0].len();
    let h = 1.0 / n as f64;
    let field: Vec<f64> = (0..n).map(|i| (0..d).map(|j| xi[j] * cell.v[j][i]).sum()).collect();
    Ok(CMatrix::from_fn(n, n, |a, b| c(0.0, h * (field[b] - field[a]))))
}

/// Precomputed pieces shared by every ξ of a threshold sweep.
#[derive(Debug, Clone)]
pub struct ThresholdContext<'a> {
    model: &'a FiberModel,
    cell: &'a CellSolution,
    g0: DMatrix<f64>,
    projector: CMatrix,
    reduced: CMatrix,
    a0: CMatrix,
    a0_values: Vec<f64>,
    a0_vectors: CMatrix,
    contour: Contour,
}

/// Everything measured at one quasimomentum.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub xi: Vec<f64>,
    pub xi_norm: f64,
    /// ‖F − P‖
    pub f_minus_p: f64,
    /// ‖F − P − [F]₁‖
    pub f_minus_p_minus_f1: f64,
    /// ‖𝔸F − [G]₂‖
    pub af_minus_g2: f64,
    /// ‖𝔸F − [G]₂ − [G]₃‖
    pub af_minus_g2_minus_g3: f64,
    /// ‖P[G]₃P‖
    pub pg3p: f64,
    pub g3_norm: f64,
    /// ‖[F]₁‖
    pub f1_norm: f64,
    /// Threshold eigenvalue λ(ξ) = ‖𝔸F‖.
    pub eigenvalue: f64,
    pub contour_points: usize,
    pub idempotency_defect: f64,
}

impl<'a> ThresholdContext<'a> {
    pub fn new(
        model: &'a FiberModel,
        cell: &'a CellSolution,
        solver: &CellSolver,
        effective: &EffectiveMatrix,
        d0: f64,
        points: usize,
    ) -> Result<Self> {
        let n = model.grid().len();
        let contour = Contour::around_threshold(d0, points)?;
        let a0 = solver.operator().map(|x| c(x, 0.0));
        let (a0_values, a0_vectors) = hermitian_eigen(&a0);
        contour.check_spectrum(&a0_values)?;
        Ok(Self {
            model,
            cell,
            g0: effective.g0.clone(),
            projector: constant_projector(n),
            reduced: solver.reduced_resolvent().map(|x| c(x, 0.0)),
            a0,
            a0_values,
            a0_vectors,
            contour,
        })
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    /// Second eigenvalue of 𝔸(0), the measured spectral gap.
    pub fn measured_gap(&self) -> f64 {
        self.a0_values[1]
    }

    /// F(ξ) − P via the resolvent identity, with contour doubling on idempotency.
    ///
    /// The trapezoid sum (r/K)Σ R(ζ)ΔA R₀(ζ)e^{iθ} is evaluated in the eigenbases
    /// of 𝔸(ξ) and 𝔸(0): with X = V*ΔA V₀ it equals V (X ∘ C) V₀*, where
    /// C_ab = (r/K)Σ e^{iθ}/((λ_a−ζ)(λ⁰_b−ζ)).
    pub fn projection_deviation(&self, xi: &[f64]) -> Result<ContourResult> {
        let op = self.model.assemble(xi)?;
        let (values, vectors) = hermitian_eigen(&op.matrix);
        self.contour.check_spectrum(&values)?;
        let increment = self.model.increment(xi)?;
        let coupled = matmul(&matmul(&vectors.adjoint(), &increment), &self.a0_vectors);
        let n = op.matrix.nrows();
        let mut k = self.contour.points;
        loop {
            let contour = self.contour.with_points(k);
            let nodes: Vec<(Complex64, Complex64)> = contour.nodes().collect();
            let weight = contour.weight();
            let left: Vec<Vec<Complex64>> =
                values.iter().map(|l| nodes.iter().map(|(z, ph)| ph * weight / (l - z)).collect()).collect();
            let right: Vec<Vec<Complex64>> =
                self.a0_values.iter().map(|l| nodes.iter().map(|(z, _)| 1.0 / (l - z)).collect()).collect();
            let weights = CMatrix::from_fn(n, n, |a, b| {
                let dot: Complex64 = left[a].iter().zip(&right[b]).map(|(x, y)| x * y).sum();
                coupled[(a, b)] * dot
            });
            let deviation = matmul(&matmul(&vectors, &weights), &self.a0_vectors.adjoint());
            let defect = idempotency(&(&deviation + &self.projector));
            if defect < IDEMPOTENCY_TARGET {
                return Ok(ContourResult { matrix: deviation, points: k, idempotency_defect: defect });
            }
            if k >= MAX_CONTOUR_POINTS {
                return Err(Error::ContourAccuracy { points: k, defect });
            }
            k *= 2;
        }
    }

    /// λ(ξ) from the range of F: φ = F1 normalized by (φ,1) = 1, and
    /// λ = ((𝔸(0)ψ,ψ) + Re((𝔸(ξ)−𝔸(0))φ,φ)) / ‖φ‖² with ψ = φ − 1.
    pub fn threshold_eigenvalue(&self, xi: &[f64], deviation: &CMatrix) -> Result<f64> {
        let n = deviation.nrows();
        let h = 1.0 / n as f64;
        let delta: DVector<Complex64> = deviation * DVector::from_element(n, c(1.0, 0.0));
        let mass = delta.sum() * h;
        let psi = delta.map(|z| (z - mass) / (c(1.0, 0.0) + mass));
        let phi = psi.map(|z| z + 1.0);
        let increment = self.model.increment(xi)?;
        let inner = |a: &DVector<Complex64>, b: &DVector<Complex64>| a.dotc(b) * h;
        let base = inner(&psi, &(&self.a0 * &psi)).re;
        let extra = inner(&phi, &(&increment * &phi)).re;
        Ok((base + extra) / (inner(&phi, &phi).re))
    }

    /// [Δ_kA](ξ).
    fn taylor(&self, xi: &[f64], order: usize) -> Result<CMatrix> {
        self.model.taylor_term(xi, order)
    }

    /// [G]₃(ξ) by the eight-term formula.
    pub fn g3(&self, xi: &[f64]) -> Result<CMatrix> {
        let p = &self.projector;
        let r = &self.reduced;
        let d1 = self.taylor(xi, 1)?;
        let d2 = self.taylor(xi, 2)?;
        let d3 = self.taylor(xi, 3)?;
        let m = matmul;
        let p_d1_r = m(&m(p, &d1), r);
        let r_d1_p = m(&m(r, &d1), p);
        let p_d2 = m(p, &d2);
        let g = m(&m(p, &d3), p) - m(&m(&p_d1_r, &d2), p) - m(&p_d2, &r_d1_p) + m(&m(&p_d1_r, &d1), &r_d1_p)
            - m(&m(&r_d1_p, &d2), p)
            - m(&p_d2, &p_d1_r)
            + m(&m(&r_d1_p, &d1), &r_d1_p)
            + m(&m(&p_d1_r, &d1), &p_d1_r);
        Ok(g)
    }

    /// G_kl = P∂_k∂_l𝔸(0)P − P∂_k𝔸(0)R₀^⊥∂_l𝔸(0)P − P∂_l𝔸(0)R₀^⊥∂_k𝔸(0)P.
    pub fn g_kl(&self, k: usize, l: usize) -> Result<CMatrix> {
        let d = self.model.grid().dim();
        let unit = |j: usize| -> Vec<usize> { (0..d).map(|i| usize::from(i == j)).collect() };
        let mut both = vec![0usize; d];
        both[k] += 1;
        both[l] += 1;
        let p = &self.projector;
        let r = &self.reduced;
        let dk = self.model.derivative(&unit(k))?;
        let dl = self.model.derivative(&unit(l))?;
        let dkl = self.model.derivative(&both)?;
        Ok(p * dkl * p - p * &dk * r * &dl * p - p * &dl * r * &dk * p)
    }

    /// F_j = −P∂_j𝔸(0)R₀^⊥ − R₀^⊥∂_j𝔸(0)P.
    pub fn f_j(&self, j: usize) -> Result<CMatrix> {
        let d = self.model.grid().dim();
        let alpha: Vec<usize> = (0..d).map(|i| usize::from(i == j)).collect();
        let dj = self.model.derivative(&alpha)?;
        let p = &self.projector;
        let r = &self.reduced;
        Ok(-(p * &dj * r) - r * &dj * p)
    }

    /// Measures every residual of the expansion at ξ.
    pub fn row(&self, xi: &[f64]) -> Result<ThresholdRow> {
        let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let deviation = self.projection_deviation(xi)?;
        let lambda = self.threshold_eigenvalue(xi, &deviation.matrix)?;
        let f1 = f1_operator(self.cell, xi)?;
        let g3 = self.g3(xi)?;
        let quad: f64 =
            (0..xi.len()).map(|a| (0..xi.len()).map(|b| self.g0[(a, b)] * xi[a] * xi[b]).sum::<f64>()).sum();
        let d = &deviation.matrix;
        // 𝔸F − [G]₂ = λ(F−P) + (λ − ⟨g⁰ξ,ξ⟩)P
        let af_g2 = d * c(lambda, 0.0) + &self.projector * c(lambda - quad, 0.0);
        let norm = |m: &CMatrix| crate::linalg::operator_norm(m);
        Ok(ThresholdRow {
            xi: xi.to_vec(),
            xi_norm,
            f_minus_p: norm(d)?,
            f_minus_p_minus_f1: norm(&(d - &f1))?,
            af_minus_g2: norm(&af_g2)?,
            af_minus_g2_minus_g3: norm(&(&af_g2 - &g3))?,
            pg3p: norm(&(&self.projector * &g3 * &self.projector))?,
            g3_norm: norm(&g3)?,
            f1_norm: norm(&f1)?,
            eigenvalue: lambda,
            contour_points: deviation.points,
            idempotency_defect: deviation.idempotency_defect,
        })
    }
}

/// ξ = δ₀·2^{−m}·direction for m = 1..=count.
pub fn geometric_xi_list(delta0: f64, direction: &[f64], count: usize) -> Vec<Vec<f64>> {
    let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    (1..=count)
        .map(|m| {
            let s = delta0 * 0.5f64.powi(m as i32) / len;
            direction.iter().map(|v| v * s).collect()
        })
        .collect()
}

/// Constants of the residual bounds, C₁..C₄.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSlopes {
    pub f_minus_p: f64,
    pub f_minus_p_minus_f1: f64,
    pub af_minus_g2: f64,
    pub af_minus_g2_minus_g3: f64,
}

/// Smallest distance to each bound C_k|ξ|^k + τ over the rows (negative means violated).
#[derive(Debug, Clone, Serialize)]
pub struct BoundMargins {
    pub f_minus_p: f64,
    pub f_minus_p_minus_f1: f64,
    pub af_minus_g2: f64,
    pub af_minus_g2_minus_g3: f64,
    pub f1: f64,
}

impl BoundMargins {
    pub fn passed(&self) -> bool {
        [self.f_minus_p, self.f_minus_p_minus_f1, self.af_minus_g2, self.af_minus_g2_minus_g3, self.f1]
            .iter()
            .all(|m| *m >= 0.0)
    }
}

/// Least-squares fit ‖𝔸F‖ ≈ c₀ + c₁|ξ| + c₂|ξ|²; c₀ and c₁ should vanish.
#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderFit {
    pub intercept: f64,
    pub linear: f64,
    pub quadratic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub d0: f64,
    pub measured_gap: f64,
    pub contour: Contour,
    pub rows: Vec<ThresholdRow>,
    pub slopes: ThresholdSlopes,
    pub margins: Option<BoundMargins>,
    pub first_order: FirstOrderFit,
}

fn fit_quadratic(x: &[f64], y: &[f64]) -> FirstOrderFit {
    // Normal equations on a scaled variable to keep them well conditioned.
    let scale = x.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(x.len(), 3, |i, k| (x[i] / scale).powi(k as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(3));
    FirstOrderFit { intercept: coef[0], linear: coef[1] / scale, quadratic: coef[2] / (scale * scale) }
}

/// Sweeps ξ (in parallel) and fits the residual slopes over the smallest |ξ|.
pub fn threshold_sweep(
    ctx: &ThresholdContext<'_>,
    xi_list: &[Vec<f64>],
    constants: Option<ResidualConstants>,
    tolerance: f64,
) -> Result<ThresholdReport> {
    let mut rows = xi_list
        .par_iter()
        .map(|xi| {
            ctx.row(xi).map_err(|e| match e {
                Error::ContourHitsSpectrum { .. } | Error::ContourRank(_) | Error::ContourAccuracy { .. } => {
                    Error::InvalidArgument(format!("contour failure at ξ = {xi:?}: {e}"))
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.xi_norm.total_cmp(&a.xi_norm));
    let window = &rows[rows.len().saturating_sub(SLOPE_WINDOW)..];
    let x: Vec<f64> = window.iter().map(|r| r.xi_norm).collect();
    let slope = |f: fn(&ThresholdRow) -> f64| loglog_slope(&x, &window.iter().map(f).collect::<Vec<_>>());
    let slopes = ThresholdSlopes {
        f_minus_p: slope(|r| r.f_minus_p),
        f_minus_p_minus_f1: slope(|r| r.f_minus_p_minus_f1),
        af_minus_g2: slope(|r| r.af_minus_g2),
        af_minus_g2_minus_g3: slope(|r| r.af_minus_g2_minus_g3),
    };
    let margins = constants.map(|k| {
        let worst = |f: &dyn Fn(&ThresholdRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
        BoundMargins {
            f_minus_p: worst(&|r| k.c1 * r.xi_norm + tolerance - r.f_minus_p),
            f_minus_p_minus_f1: worst(&|r| k.c2 * r.xi_norm.powi(2) + tolerance - r.f_minus_p_minus_f1),
            af_minus_g2: worst(&|r| k.c3 * r.xi_norm.powi(3) + tolerance - r.af_minus_g2),
            af_minus_g2_minus_g3: worst(&|r| k.c4 * r.xi_norm.powi(4) + tolerance - r.af_minus_g2_minus_g3),
            f1: worst(&|r| k.c1 * r.xi_norm + tolerance - r.f1_norm),
        }
    });
    let all_x: Vec<f64> = rows.iter().map(|r| r.xi_norm).collect();
    let all_y: Vec<f64> = rows.iter().map(|r| r.eigenvalue.abs()).collect();
    Ok(ThresholdReport {
        d0: 3.0 * ctx.contour.radius,
        measured_gap: ctx.measured_gap(),
        contour: ctx.contour,
        rows,
        slopes,
        margins,
        first_order: fit_quadratic(&all_x, &all_y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_problem_with;
    use crate::effective::effective_matrix;
    use crate::grid::Grid;
    use crate::kernels::{symbol_min_outside, KernelSpec, MuSpec};
    use crate::linalg::max_abs;

    fn setup(n: usize) -> (FiberModel, CellSolver, CellSolution, EffectiveMatrix, f64) {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        let mu = MuSpec::cosine_product(1, 1.0, 0.5).unwrap();
        let model = FiberModel::new(&k, &mu, Grid::new(1, n).unwrap()).unwrap();
        let solver = CellSolver::new(&model).unwrap();
        let cell = solve_cell_problem_with(&model, &solver).unwrap();
        let g = effective_matrix(&model, &cell).unwrap();
        let d0 = mu.lower() * symbol_min_outside(&k, PI).unwrap();
        (model, solver, cell, g, d0)
    }

    #[test]
    fn projection_at_zero_is_the_mean() {
        let (model, ..) = setup(16);
        let op = model.assemble(&[0.0]).unwrap();
        let contour = Contour::around_threshold(0.5 * 0.3634, 64).unwrap();
        let f = riesz_projection(&op, &contour).unwrap();
        assert!(max_abs(&(&f.matrix - constant_projector(16))) < 1e-12);
        let af = riesz_af(&op, &contour).unwrap();
        assert!(max_abs(&af.matrix) < 1e-12);
    }

    #[test]
    fn contour_rejects_bad_spectra() {
        let contour = Contour::around_threshold(0.3, 64).unwrap();
        assert!(matches!(contour.check_spectrum(&[0.0, 0.15, 1.0]), Err(Error::ContourHitsSpectrum { .. })));
        assert!(matches!(contour.check_spectrum(&[0.0, 0.01, 1.0]), Err(Error::ContourRank(2))));
        assert!(contour.check_spectrum(&[0.0, 0.3]).is_ok());
        assert!(Contour::around_threshold(0.3, 10).is_err());
    }

    #[test]
    fn deviation_route_matches_plain_contour() {
        let (model, solver, cell, g, d0) = setup(16);
        let ctx = ThresholdContext::new(&model, &cell, &solver, &g, d0, 128).unwrap();
        let xi = [0.12];
        let op = model.assemble(&xi).unwrap();
        let plain = riesz_projection(&op, ctx.contour()).unwrap();
        let dev = ctx.projection_deviation(&xi).unwrap();
        assert!(max_abs(&(&plain.matrix - constant_projector(16) - &dev.matrix)) < 1e-12);
        let (lambda, oracle) = spectral_projector_oracle(&op);
        assert!(max_abs(&(&plain.matrix - oracle)) < 1e-10);
        let rq = ctx.threshold_eigenvalue(&xi, &dev.matrix).unwrap();
        assert!((rq - lambda).abs() < 1e-13);
    }

    #[test]
    fn contour_f_j_and_g_kl_match_cell_route() {
        let (model, solver, cell, g, d0) = setup(32);
        let ctx = ThresholdContext::new(&model, &cell, &solver, &g, d0, 64).unwrap();
        let fj = ctx.f_j(0).unwrap();
        let direct = f1_operator(&cell, &[1.0]).unwrap();
        assert!(max_abs(&(&fj - &direct)) <= 1e-10 * max_abs(&direct));
        let gkl = ctx.g_kl(0, 0).unwrap();
        let expected = constant_projector(32) * c(g.gkl_raw[(0, 0)], 0.0);
        assert!(max_abs(&(&gkl - &expected)) <= 1e-10 * max_abs(&expected));
    }

    #[test]
    fn g3_is_cubic_and_annihilated_by_p() {
        let (model, solver, cell, g, d0) = setup(32);
        let ctx = ThresholdContext::new(&model, &cell, &solver, &g, d0, 64).unwrap();
        let a = ctx.g3(&[0.05]).unwrap();
        let b = ctx.g3(&[0.1]).unwrap();
        assert!(max_abs(&(&b - &a * c(8.0, 0.0))) <= 1e-10 * max_abs(&b));
        let p = constant_projector(32);
        assert!(max_abs(&(&p * &b * &p)) <= 1e-12 * max_abs(&b));
    }
}
