//! Resolvent comparison experiments: explicit constants, the corrector K(ξ,ε),
//! fiber errors and convergence-rate sweeps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{rearrangement_constant, CellSolution};
use crate::effective::EffectiveMatrix;
use crate::error::{Error, Result};
use crate::fiber::{assemble_effective_fiber, effective_symbol, fourier_multiplier, FiberModel};
use crate::grid::Grid;
use crate::kernels::{moment, second_moment_min, symbol_min_outside, KernelSpec, MuSpec};
use crate::linalg::{c, constant_projector, hermitian_eigen, loglog_slope, matmul, operator_norm, CMatrix};
use crate::threshold::f1_operator;

/// Number of smallest ε used in rate slope fits.
pub const RATE_WINDOW: usize = 5;

/// Every named constant of the error estimates.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsBundle {
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// M₀..M₄.
    pub moments: [f64; 5],
    /// 𝒞_π(a)
    pub c_pi: f64,
    /// 𝓜(a)
    pub m_cal: f64,
    /// r(a) = 3𝓜/(2M₃)
    pub r_a: f64,
    /// 𝒞_{r(a)}(a)
    pub c_r: f64,
    /// C(a)
    pub c_a: f64,
    pub delta0: f64,
    /// μ₋𝒞_π(a), the lower bound used for d₀.
    pub d0_bound: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub tilde_c5: f64,
    pub tilde_c6: f64,
    /// 𝐂₁ = C̃₅ + (μ₋C(a))^{-1/2}π^{-1}
    pub bold_c1: f64,
    /// 𝒞̃_{2π}(ã₁), once a grid is attached.
    pub tilde_c_2pi: Option<f64>,
    /// 𝔠(ã, μ), once a grid is attached.
    pub frak_c: Option<f64>,
    /// 𝐂₂ with the measured ‖v_j‖_∞, once a cell solution is attached.
    pub bold_c2: Option<f64>,
}

impl ConstantsBundle {
    /// μ₋C(a).
    pub fn coercivity(&self) -> f64 {
        self.mu_lower * self.c_a
    }

    /// μ₊M₁(a), the Lipschitz constant of ξ ↦ 𝔸(ξ).
    pub fn lipschitz(&self) -> f64 {
        self.mu_upper * self.moments[1]
    }

    /// Adds the grid-dependent constants 𝒞̃_{2π}, 𝔠 and 𝐂₂.
    pub fn attach_cell(&mut self, model: &FiberModel, cell: &CellSolution) -> Result<()> {
        let rearrangement = rearrangement_constant(model)?;
        let c = self.coercivity();
        let v_sup: f64 = cell.sup_norms.iter().map(|s| s * s).sum::<f64>().sqrt();
        self.tilde_c_2pi = Some(rearrangement.tilde_c_2pi);
        self.frak_c = Some(rearrangement.value);
        self.bold_c2 = Some(self.tilde_c6 + 1.0 / (c * PI * PI) + 2.0 * v_sup / (c * PI));
        Ok(())
    }

    /// Positive, finite, δ₀ < π and C(a) the minimum of its branches.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("C_pi", self.c_pi),
            ("M_cal", self.m_cal),
            ("r_a", self.r_a),
            ("C_r", self.c_r),
            ("C_a", self.c_a),
            ("delta0", self.delta0),
            ("d0_bound", self.d0_bound),
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("C4", self.c4),
            ("C5", self.c5),
            ("C6", self.c6),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidKernel(format!("constant {name} = {value} is not positive")));
            }
        }
        if self.delta0 >= PI {
            return Err(Error::InvalidKernel(format!("delta0 = {} is not below π", self.delta0)));
        }
        Ok(())
    }
}

/// Model-independent constants from kernel moments and symbol minima.
pub fn constants_bundle(kernel: &KernelSpec, mu: &MuSpec) -> Result<ConstantsBundle> {
    let d = kernel.dim() as f64;
    let mut moments = [0.0; 5];
    for (k, m) in moments.iter_mut().enumerate() {
        *m = moment(kernel, k)?;
    }
    let [_, m1, m2, m3, m4] = moments;
    let (lo, hi) = (mu.lower(), mu.upper());
    let c_pi = symbol_min_outside(kernel, PI)?;
    let m_cal = second_moment_min(kernel)?;
    let r_a = 3.0 * m_cal / (2.0 * m3);
    let c_r = symbol_min_outside(kernel, r_a)?;
    let c_a = (0.25 * m_cal).min(c_r / (PI * PI * d)).min(c_pi / (PI * PI * d));
    let d0 = lo * c_pi;
    let delta0 = d0 / (3.0 * m1 * hi);
    let k = (PI + 2.0) / PI;
    let c1 = 6.0 * k * hi * m1 / d0;
    let c2 = k * (36.0 * hi * hi * m1 * m1 / (d0 * d0) + 3.0 * hi * m2 / d0);
    let c3 = 0.5 * k * (216.0 * hi.powi(3) * m1.powi(3) / (d0 * d0) + hi * m3 + 36.0 * hi * hi * m1 * m2 / d0);
    let c4 = 0.5
        * k
        * (1296.0 * hi.powi(4) * m1.powi(4) / d0.powi(3)
            + hi * m4 / 4.0
            + hi * hi * (12.0 * m1 * m3 + 9.0 * m2 * m2) / d0
            + 1296.0 * hi.powi(3) * m1 * m1 * m2 / (4.0 * d0 * d0));
    let coer = lo * c_a;
    let c5 = (3.0 / d0).sqrt() + c1 / coer.sqrt() + c3 / coer.powf(1.5);
    let c6 =
        3.0 / d0 + (2.0 * c1 * c1 + 2.0 * c2) / coer + (3.0 * c1 * c3 + c4) / (coer * coer) + c3 * c3 / coer.powi(3);
    let tilde_c5 = c5.max(2.0 / (coer.sqrt() * delta0));
    let tilde_c6 = c6.max(2.0 / (coer * delta0 * delta0) + 2.0 * c1 / (coer * delta0));
    let bold_c1 = tilde_c5 + 1.0 / (coer.sqrt() * PI);
    let bundle = ConstantsBundle {
        mu_lower: lo,
        mu_upper: hi,
        moments,
        c_pi,
        m_cal,
        r_a,
        c_r,
        c_a,
        delta0,
        d0_bound: d0,
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        tilde_c5,
        tilde_c6,
        bold_c1,
        tilde_c_2pi: None,
        frak_c: None,
        bold_c2: None,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// μ₊M₁(a)·spacing·ε^{-4}: how far a fiber error can move between a sampled ξ and
/// any point within `spacing` of it, since both resolvents are bounded by ε^{-2}.
pub fn xi_sampling_bound(kernel: &KernelSpec, mu: &MuSpec, spacing: f64, epsilon: f64) -> Result<f64> {
    if !(spacing >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("spacing must be nonnegative and ε positive".into()));
    }
    Ok(mu.upper() * moment(kernel, 1)? * spacing / epsilon.powi(4))
}

/// Symbols (2πn_j + ξ_j)/(⟨g⁰(2πn+ξ), 2πn+ξ⟩ + ε²) of (D_j+ξ_j)(𝔸⁰(ξ)+ε²)^{-1}.
fn corrector_symbols(effective: &EffectiveMatrix, grid: &Grid, xi: &[f64], eps: f64) -> Vec<Vec<Complex64>> {
    let s = effective_symbol(&effective.g0, grid, xi);
    (0..grid.dim())
        .map(|j| {
            (0..grid.len())
                .map(|idx| {
                    let k = 2.0 * PI * grid.mode(idx)[j] as f64 + xi[j];
                    c(k / (s[idx] + eps * eps), 0.0)
                })
                .collect()
        })
        .collect()
}

/// K(ξ,ε) = −iΣ[v_j](D_j+ξ_j)(𝔸⁰(ξ)+ε²)^{-1} + iΣ(𝔸⁰(ξ)+ε²)^{-1}(D_j+ξ_j)[v_j].
pub fn corrector_k(
    effective: &EffectiveMatrix,
    cell: &CellSolution,
    grid: &Grid,
    xi: &[f64],
    eps: f64,
) -> Result<CMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive (got {eps})")));
    }
    if xi.len() != grid.dim() || cell.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("ξ, cell and grid dimensions differ".into()));
    }
    let n = grid.len();
    let mut k = CMatrix::zeros(n, n);
    for (j, symbol) in corrector_symbols(effective, grid, xi, eps).iter().enumerate() {
        let t = fourier_multiplier(grid, symbol);
        let v = &cell.v[j];
        for a in 0..n {
            for b in 0..n {
                k[(a, b)] += c(0.0, -(v[a] - v[b])) * t[(a, b)];
            }
        }
    }
    Ok(k)
}

/// 2(Σ‖v_j‖²_∞)^{1/2} · max_n |2πn+ξ| / (⟨g⁰(2πn+ξ),2πn+ξ⟩ + ε²).
pub fn corrector_bound(effective: &EffectiveMatrix, cell: &CellSolution, grid: &Grid, xi: &[f64], eps: f64) -> f64 {
    let s = effective_symbol(&effective.g0, grid, xi);
    let top = (0..grid.len())
        .map(|idx| {
            let m = grid.mode(idx);
            let norm = (0..grid.dim()).map(|j| (2.0 * PI * m[j] as f64 + xi[j]).powi(2)).sum::<f64>().sqrt();
            norm / (s[idx] + eps * eps)
        })
        .fold(0.0, f64::max);
    let v: f64 = cell.sup_norms.iter().map(|x| x * x).sum::<f64>().sqrt();
    2.0 * v * top
}

/// Spectral data at one ξ, reused for every ε.
pub struct FiberComparison<'a> {
    effective: &'a EffectiveMatrix,
    cell: &'a CellSolution,
    grid: Grid,
    xi: Vec<f64>,
    values: Vec<f64>,
    vectors: CMatrix,
    symbol: Vec<f64>,
}

/// Plain and corrected errors of one fiber at one ε.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiberErrors {
    pub plain: f64,
    pub corrected: f64,
}

impl<'a> FiberComparison<'a> {
    pub fn new(model: &FiberModel, effective: &'a EffectiveMatrix, cell: &'a CellSolution, xi: &[f64]) -> Result<Self> {
        let grid = *model.grid();
        let (values, vectors) = hermitian_eigen(&model.assemble(xi)?.matrix);
        Ok(Self {
            effective,
            cell,
            grid,
            xi: xi.to_vec(),
            values,
            vectors,
            symbol: effective_symbol(&effective.g0, &grid, xi),
        })
    }

    /// (𝔸(ξ)+ε²)^{-1}.
    pub fn resolvent(&self, eps: f64) -> CMatrix {
        let n = self.values.len();
        let scaled = CMatrix::from_fn(n, n, |i, k| self.vectors[(i, k)] / (self.values[k] + eps * eps));
        matmul(&scaled, &self.vectors.adjoint())
    }

    /// (𝔸⁰(ξ)+ε²)^{-1}.
    pub fn effective_resolvent(&self, eps: f64) -> CMatrix {
        let symbol: Vec<Complex64> = self.symbol.iter().map(|s| c(1.0 / (s + eps * eps), 0.0)).collect();
        fourier_multiplier(&self.grid, &symbol)
    }

    pub fn errors(&self, eps: f64) -> Result<FiberErrors> {
        let plain = self.resolvent(eps) - self.effective_resolvent(eps);
        let corrected = &plain - corrector_k(self.effective, self.cell, &self.grid, &self.xi, eps)?;
        Ok(FiberErrors { plain: operator_norm(&plain)?, corrected: operator_norm(&corrected)? })
    }

    /// Threshold-level errors: (𝔸+ε²)^{-1} − (⟨g⁰ξ,ξ⟩+ε²)^{-1}P and the same with
    /// [F]₁P + P[F]₁ added to the approximation.
    pub fn threshold_errors(&self, eps: f64) -> Result<FiberErrors> {
        let n = self.grid.len();
        let quad: f64 = (0..self.xi.len())
            .map(|a| (0..self.xi.len()).map(|b| self.effective.g0[(a, b)] * self.xi[a] * self.xi[b]).sum::<f64>())
            .sum();
        let p = constant_projector(n);
        let scale = c(1.0 / (quad + eps * eps), 0.0);
        let plain = self.resolvent(eps) - &p * scale;
        let f1 = f1_operator(self.cell, &self.xi)?;
        let corrected = &plain - (matmul(&f1, &p) + matmul(&p, &f1)) * scale;
        Ok(FiberErrors { plain: operator_norm(&plain)?, corrected: operator_norm(&corrected)? })
    }
}

/// ‖(𝔸(ξ)+ε²)^{-1} − (𝔸⁰(ξ)+ε²)^{-1} [− K(ξ,ε)]‖.
pub fn fiber_error(
    model: &FiberModel,
    effective: &EffectiveMatrix,
    cell: &CellSolution,
    xi: &[f64],
    eps: f64,
    with_corrector: bool,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive (got {eps})")));
    }
    // Validates g⁰ before any work.
    assemble_effective_fiber(&effective.g0, model.grid(), xi)?;
    let errors = FiberComparison::new(model, effective, cell, xi)?.errors(eps)?;
    Ok(if with_corrector { errors.corrected } else { errors.plain })
}

/// Sampling of the dual cell: a uniform tensor grid plus geometric refinement toward 0
/// along each axis. Returns the points and the covering radius of the tensor part.
pub fn xi_grid(dim: usize, per_axis: usize, refinement: usize) -> (Vec<Vec<f64>>, f64) {
    let step = 2.0 * PI / per_axis as f64;
    let mut points = Vec::new();
    for flat in 0..per_axis.pow(dim as u32) {
        let mut rest = flat;
        let p: Vec<f64> = (0..dim)
            .map(|_| {
                let k = rest % per_axis;
                rest /= per_axis;
                -PI + step * k as f64
            })
            .collect();
        points.push(p);
    }
    for axis in 0..dim {
        for m in 1..=refinement {
            let mut p = vec![0.0; dim];
            p[axis] = PI * 0.5f64.powi(m as i32);
            points.push(p);
        }
    }
    (points, 0.5 * step * (dim as f64).sqrt())
}

/// ε = 2^{-1}, …, 2^{-count}.
pub fn default_epsilons(count: usize) -> Vec<f64> {
    (1..=count).map(|k| 0.5f64.powi(k as i32)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    pub fiber_sup_plain: f64,
    pub fiber_sup_corrected: f64,
    pub ws_plain: f64,
    pub ws_corrected: f64,
    /// 𝐂₁ε
    pub bound_plain: f64,
    /// 𝐂₂ε²
    pub bound_corrected: f64,
    /// ε²·xi_sampling_bound + τ_q, added to both bounds.
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub slope_plain: f64,
    pub slope_corrected: f64,
    pub xi_points: usize,
    pub xi_spacing: f64,
    pub bounds_hold: bool,
    /// Corrected error below plain at the smallest ε.
    pub corrector_helps: bool,
}

/// Sup over the ξ sampling of the fiber errors for every ε, scaled to the whole space
/// by the exact identity ‖(𝔸_ε+I)^{-1} − …‖ = ε² sup_ξ ‖(𝔸(ξ)+ε²)^{-1} − …‖.
#[allow(clippy::too_many_arguments)]
pub fn rate_sweep(
    model: &FiberModel,
    effective: &EffectiveMatrix,
    cell: &CellSolution,
    constants: &ConstantsBundle,
    xi_list: &[Vec<f64>],
    xi_spacing: f64,
    epsilons: &[f64],
    tau: f64,
) -> Result<RateReport> {
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("ε values must be positive".into()));
    }
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("ε values must be distinct".into()));
    }
    let bold_c2 = constants
        .bold_c2
        .ok_or_else(|| Error::InvalidArgument("constants need an attached cell solution for C2".into()))?;
    let per_xi: Vec<Vec<FiberErrors>> = xi_list
        .par_iter()
        .map(|xi| {
            let cmp = FiberComparison::new(model, effective, cell, xi)?;
            eps.iter().map(|e| cmp.errors(*e)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let lipschitz = constants.lipschitz();
    let rows: Vec<RateRow> = eps
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let plain = per_xi.iter().map(|r| r[k].plain).fold(0.0, f64::max);
            let corrected = per_xi.iter().map(|r| r[k].corrected).fold(0.0, f64::max);
            let e2 = e * e;
            RateRow {
                epsilon: e,
                fiber_sup_plain: plain,
                fiber_sup_corrected: corrected,
                ws_plain: e2 * plain,
                ws_corrected: e2 * corrected,
                bound_plain: constants.bold_c1 * e,
                bound_corrected: bold_c2 * e2,
                slack: e2 * lipschitz * xi_spacing / e.powi(4) + tau,
            }
        })
        .collect();
    let window = &rows[rows.len().saturating_sub(RATE_WINDOW)..];
    let x: Vec<f64> = window.iter().map(|r| r.epsilon).collect();
    let slope_plain = loglog_slope(&x, &window.iter().map(|r| r.ws_plain).collect::<Vec<_>>());
    let slope_corrected = loglog_slope(&x, &window.iter().map(|r| r.ws_corrected).collect::<Vec<_>>());
    let bounds_hold =
        rows.iter().all(|r| r.ws_plain <= r.bound_plain + r.slack && r.ws_corrected <= r.bound_corrected + r.slack);
    let last = rows.last().expect("at least one ε");
    Ok(RateReport {
        corrector_helps: last.fiber_sup_corrected < last.fiber_sup_plain,
        rows,
        slope_plain,
        slope_corrected,
        xi_points: xi_list.len(),
        xi_spacing,
        bounds_hold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberBoundRow {
    pub xi_norm: f64,
    pub epsilon: f64,
    pub plain: f64,
    /// C₅ε^{-1}
    pub bound_plain: f64,
    pub corrected: f64,
    /// C₆
    pub bound_corrected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberBoundReport {
    pub rows: Vec<FiberBoundRow>,
    pub slack: f64,
    pub worst_plain_ratio: f64,
    pub worst_corrected_ratio: f64,
    pub pass: bool,
}

/// Threshold-level resolvent approximations for |ξ| ≤ δ₀ against C₅ε^{-1} and C₆.
pub fn fiber_constant_check(
    model: &FiberModel,
    effective: &EffectiveMatrix,
    cell: &CellSolution,
    constants: &ConstantsBundle,
    xi_list: &[Vec<f64>],
    epsilons: &[f64],
    slack: f64,
) -> Result<FiberBoundReport> {
    let rows: Vec<Vec<FiberBoundRow>> = xi_list
        .par_iter()
        .map(|xi| {
            let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if xi_norm > constants.delta0 * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!("|ξ| = {xi_norm} exceeds δ₀ = {}", constants.delta0)));
            }
            let cmp = FiberComparison::new(model, effective, cell, xi)?;
            epsilons
                .iter()
                .map(|&e| {
                    let errs = cmp.threshold_errors(e)?;
                    Ok(FiberBoundRow {
                        xi_norm,
                        epsilon: e,
                        plain: errs.plain,
                        bound_plain: constants.c5 / e,
                        corrected: errs.corrected,
                        bound_corrected: constants.c6,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<FiberBoundRow> = rows.into_iter().flatten().collect();
    let worst = |f: &dyn Fn(&FiberBoundRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let worst_plain_ratio = worst(&|r| r.plain / (r.bound_plain + slack));
    let worst_corrected_ratio = worst(&|r| r.corrected / (r.bound_corrected + slack));
    Ok(FiberBoundReport {
        pass: worst_plain_ratio <= 1.0 && worst_corrected_ratio <= 1.0,
        rows,
        slack,
        worst_plain_ratio,
        worst_corrected_ratio,
    })
}

/// Smallest eigenvalue of 𝔸(ξ) against μ₋C(a)|ξ|² over the given ξ.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    /// min over ξ of λ_min(𝔸(ξ)) − μ₋C(a)|ξ|².
    pub worst_margin: f64,
    /// Second eigenvalue of 𝔸(0).
    pub gap: f64,
    /// μ₋𝒞_π(a).
    pub gap_floor: f64,
    pub pass: bool,
}

pub fn coercivity_check(
    model: &FiberModel,
    constants: &ConstantsBundle,
    xi_list: &[Vec<f64>],
    tau: f64,
) -> Result<CoercivityReport> {
    let margins = xi_list
        .par_iter()
        .map(|xi| {
            let norm2: f64 = xi.iter().map(|v| v * v).sum();
            let values = crate::linalg::hermitian_eigenvalues(&model.assemble(xi)?.matrix);
            Ok(values[0] - constants.coercivity() * norm2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst_margin = margins.into_iter().fold(f64::INFINITY, f64::min);
    let d = model.grid().dim();
    let gap = crate::linalg::hermitian_eigenvalues(&model.assemble(&vec![0.0; d])?.matrix)[1];
    Ok(CoercivityReport {
        worst_margin,
        gap,
        gap_floor: constants.d0_bound,
        pass: worst_margin >= -tau && gap >= constants.d0_bound - tau,
    })
}

/// ‖𝔸(ξ) − 𝔸(η)‖ against μ₊M₁|ξ−η| for the given pairs.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    /// max over pairs of ‖𝔸(ξ)−𝔸(η)‖ − μ₊M₁|ξ−η|.
    pub worst_excess: f64,
    pub pass: bool,
}

pub fn lipschitz_check(
    model: &FiberModel,
    constants: &ConstantsBundle,
    pairs: &[(Vec<f64>, Vec<f64>)],
    tau: f64,
) -> Result<LipschitzReport> {
    let excess = pairs
        .par_iter()
        .map(|(xi, eta)| {
            let diff = model.increment(xi)? - model.increment(eta)?;
            let dist: f64 = xi.iter().zip(eta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(operator_norm(&diff)? - constants.lipschitz() * dist)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst_excess = excess.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(LipschitzReport { pairs: pairs.len(), worst_excess, pass: worst_excess <= tau })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constants() {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        let b = constants_bundle(&k, &MuSpec::constant(1, 1.0).unwrap()).unwrap();
        assert!((b.m_cal - 1.0 / 12.0).abs() < 1e-15);
        assert!((b.r_a - 4.0).abs() < 1e-12);
        assert!((b.c_a - 1.0 / 48.0).abs() < 1e-12);
        let b = constants_bundle(&k, &MuSpec::cosine_product(1, 1.0, 0.5).unwrap()).unwrap();
        assert!((b.delta0 - 0.16150).abs() < 5e-6, "{}", b.delta0);
        assert!((b.lipschitz() - 0.375).abs() < 1e-15);
        let g = KernelSpec::gaussian(1, 1.0, 1.0).unwrap();
        let b = constants_bundle(&g, &MuSpec::constant(1, 1.0).unwrap()).unwrap();
        assert!((b.c_pi - (1.0 - (-PI * PI / 2.0).exp())).abs() < 1e-12);
    }

    #[test]
    fn sampling_bound_is_linear() {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        let mu = MuSpec::cosine_product(1, 1.0, 0.5).unwrap();
        assert_eq!(xi_sampling_bound(&k, &mu, 0.0, 0.5).unwrap(), 0.0);
        let a = xi_sampling_bound(&k, &mu, 0.1, 1.0).unwrap();
        assert!((a - 0.0375).abs() < 1e-15);
        assert!((xi_sampling_bound(&k, &mu, 0.2, 1.0).unwrap() - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn xi_grid_shape() {
        let (pts, spacing) = xi_grid(1, 17, 8);
        assert_eq!(pts.len(), 25);
        assert!((spacing - PI / 17.0).abs() < 1e-15);
        let (pts, _) = xi_grid(2, 5, 3);
        assert_eq!(pts.len(), 31);
    }
}
