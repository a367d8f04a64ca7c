//! Cell problems for the corrector fields v_j and the L∞ diagnostics for them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::FiberModel;
use crate::kernels::{moment, scan_minimum, symbol_min_outside};

/// Data and solutions of the cell problems.
#[derive(Debug, Clone, Serialize)]
pub struct CellSolution {
    /// Corrector fields v_j, zero mean and real.
    pub v: Vec<Vec<f64>>,
    /// First moments w_j(x) = ∫(x_j − y_j) a(x−y) μ(x,y) dy.
    pub w: Vec<Vec<f64>>,
    /// Second moments w_kl(x).
    pub wkl: Vec<Vec<Vec<f64>>>,
    /// ‖𝔸(0)v_j − w_j‖ / ‖w_j‖ (absolute when w_j = 0).
    pub residuals: Vec<f64>,
    /// max |v_j| over the grid.
    pub sup_norms: Vec<f64>,
}

impl CellSolution {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.sup_norms.iter().all(|s| *s == 0.0)
    }
}

/// Factorization of 𝔸(0) + P, which is positive definite and commutes with P.
/// On mean-zero right-hand sides its inverse is the reduced resolvent.
#[derive(Debug, Clone)]
pub struct CellSolver {
    operator: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl CellSolver {
    pub fn new(model: &FiberModel) -> Result<Self> {
        let d = model.grid().dim();
        let operator = model.assemble(&vec![0.0; d])?.matrix.map(|z| z.re);
        let n = operator.nrows();
        let shifted = &operator + DMatrix::from_element(n, n, 1.0 / n as f64);
        let factor = shifted
            .cholesky()
            .ok_or_else(|| Error::Factorization("𝔸(0) + P is not positive definite (singular cell problem)".into()))?;
        Ok(Self { operator, factor })
    }

    /// 𝔸(0) as a real matrix.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    /// Mean-zero solution of 𝔸(0)v = P^⊥ rhs.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_vec(remove_mean(rhs));
        remove_mean(self.factor.solve(&b).as_slice())
    }

    /// R₀^⊥(0) = P^⊥ 𝔸(0)^{-1} P^⊥ = (𝔸(0) + P)^{-1} − P.
    pub fn reduced_resolvent(&self) -> DMatrix<f64> {
        let n = self.operator.nrows();
        self.factor.inverse() - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    /// ‖𝔸(0)v − w‖ / ‖w‖, or the absolute residual when w = 0.
    pub fn residual(&self, v: &[f64], w: &[f64]) -> f64 {
        let r = &self.operator * DVector::from_column_slice(v) - DVector::from_column_slice(w);
        let scale = DVector::from_column_slice(w).norm();
        if scale > 0.0 {
            r.norm() / scale
        } else {
            r.norm()
        }
    }
}

pub fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

pub fn remove_mean(u: &[f64]) -> Vec<f64> {
    let m = mean(u);
    u.iter().map(|x| x - m).collect()
}

fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Node values of x ↦ h Σ_y μ(x,y) k(x−y) for residue-indexed k.
fn integrate_against_mu(model: &FiberModel, per_residue: &[f64]) -> Vec<f64> {
    let grid = model.grid();
    let n = grid.len();
    let h = grid.weight();
    let mu = model.mu_values();
    (0..n).map(|i| h * (0..n).map(|j| mu[(i, j)] * per_residue[grid.residue(i, j)]).sum::<f64>()).collect()
}

/// Relative size below which a first moment w_j counts as cancelled to round-off.
const CANCELLATION: f64 = 1e-13;

/// w_j and w_kl on the grid. A w_j that cancels to round-off against the same
/// integral taken with |t_j| (an even configuration) is set to zero exactly.
pub fn compute_w(model: &FiberModel) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let d = model.grid().dim();
    let table = model.table();
    let w = (0..d)
        .map(|j| {
            let wj = integrate_against_mu(model, &table.weighted(|t| t[j]));
            let magnitude = sup_norm(&integrate_against_mu(model, &table.weighted(|t| t[j].abs())));
            if sup_norm(&wj) <= CANCELLATION * magnitude {
                vec![0.0; wj.len()]
            } else {
                wj
            }
        })
        .collect();
    let wkl = (0..d)
        .map(|k| (0..d).map(|l| integrate_against_mu(model, &table.weighted(|t| t[k] * t[l]))).collect())
        .collect();
    (w, wkl)
}

/// v_j by the direct projected solve.
pub fn solve_cell(model: &FiberModel, j: usize) -> Result<Vec<f64>> {
    let d = model.grid().dim();
    if j >= d {
        return Err(Error::InvalidArgument(format!("index {j} out of range for d = {d}")));
    }
    let (w, _) = compute_w(model);
    Ok(CellSolver::new(model)?.solve(&w[j]))
}

/// All cell problems with a single factorization.
pub fn solve_cell_problem(model: &FiberModel) -> Result<CellSolution> {
    let solver = CellSolver::new(model)?;
    solve_cell_problem_with(model, &solver)
}

pub fn solve_cell_problem_with(model: &FiberModel, solver: &CellSolver) -> Result<CellSolution> {
    let (w, wkl) = compute_w(model);
    let v: Vec<Vec<f64>> = w.iter().map(|wj| solver.solve(wj)).collect();
    let residuals = v.iter().zip(&w).map(|(vj, wj)| solver.residual(vj, wj)).collect();
    let sup_norms = v.iter().map(|vj| sup_norm(vj)).collect();
    Ok(CellSolution { v, w, wkl, residuals, sup_norms })
}

/// Outcome of the damped fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Independent solver: v ← (1−θ)v + θ P^⊥((w + 𝔹(0)v)/p), started from zero,
/// stopped when the relative update drops below `tolerance`.
pub fn fixed_point_cell(
    model: &FiberModel,
    w: &[f64],
    relaxation: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FixedPoint> {
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        return Err(Error::InvalidArgument(format!("relaxation must lie in (0, 1] (got {relaxation})")));
    }
    let grid = model.grid();
    let n = grid.len();
    if w.len() != n {
        return Err(Error::DimensionMismatch("right-hand side length differs from grid".into()));
    }
    let h = grid.weight();
    let kernel = model.kernel_at_zero();
    let mu = model.mu_values();
    let b = DMatrix::from_fn(n, n, |i, j| h * kernel[grid.residue(i, j)] * mu[(i, j)]);
    let p = DVector::from_column_slice(model.potential());
    let w = DVector::from_column_slice(w);
    let mut v = DVector::zeros(n);
    for iteration in 1..=max_iterations {
        let mut target = (&w + &b * &v).component_div(&p);
        let m = target.mean();
        target.add_scalar_mut(-m);
        let next = &v * (1.0 - relaxation) + target * relaxation;
        let update = (&next - &v).norm();
        let scale = next.norm();
        v = next;
        if update <= tolerance * scale || scale == 0.0 {
            return Ok(FixedPoint { v: v.as_slice().to_vec(), iterations: iteration, converged: true });
        }
    }
    Ok(FixedPoint { v: v.as_slice().to_vec(), iterations: max_iterations, converged: false })
}

/// F(t) = sup of ∫_O f over sets of measure ≤ t, for f piecewise constant with
/// `cell_measure` per value. Sorting gives the decreasing rearrangement; F is
/// linear between quanta and constant past the total measure.
pub fn rearrangement_f(values: &[f64], cell_measure: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("rearrangement argument must be positive (got {t})")));
    }
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("rearrangement needs a nonnegative function".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut remaining = t;
    let mut total = 0.0;
    for v in sorted {
        let take = remaining.min(cell_measure);
        total += v * take;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    Ok(total)
}

/// Grid form of `rearrangement_f` for a function on Ω = [0,1)ᵈ.
pub fn rearrangement_on_cell(a_tilde: &[f64], t: f64) -> Result<f64> {
    rearrangement_f(a_tilde, 1.0 / a_tilde.len() as f64, t)
}

/// The rearrangement constant 𝔠(ã, μ) and the quantities it is built from.
#[derive(Debug, Clone, Serialize)]
pub struct RearrangementConstant {
    pub value: f64,
    pub t0: f64,
    pub tilde_c_2pi: f64,
    pub norm_a1: f64,
    pub first_branch: f64,
    pub second_branch: f64,
}

/// Side of the cube [−2,2]ᵈ over which the rearrangement is taken.
const REARRANGEMENT_CUBE: f64 = 4.0;

/// Â₁(y) = ∫_Ω ã₁(z)(1 − cos⟨z,y⟩)dz with ã₁ constant on the grid cells around
/// each node (cells crossing the boundary of Ω are wrapped).
fn truncated_symbol(model: &FiberModel, a1: &[f64], y: &[f64]) -> f64 {
    let grid = model.grid();
    let d = grid.dim();
    let h1 = grid.spacing();
    let n = grid.n();
    // Per axis: ∫ e^{i z y} over the cell of node k, for every k.
    let axis: Vec<Vec<Complex64>> = (0..d)
        .map(|i| {
            let segment = |a: f64, b: f64| -> Complex64 {
                if y[i] == 0.0 {
                    Complex64::new(b - a, 0.0)
                } else {
                    (Complex64::from_polar(1.0, b * y[i]) - Complex64::from_polar(1.0, a * y[i]))
                        / Complex64::new(0.0, y[i])
                }
            };
            (0..n)
                .map(|k| {
                    let x = k as f64 * h1;
                    if k == 0 {
                        segment(0.0, 0.5 * h1) + segment(1.0 - 0.5 * h1, 1.0)
                    } else {
                        segment(x - 0.5 * h1, x + 0.5 * h1)
                    }
                })
                .collect()
        })
        .collect();
    let h = grid.weight();
    (0..grid.len())
        .map(|r| {
            let k = grid.multi_index(r);
            let phase: Complex64 = (0..d).map(|i| axis[i][k[i]]).product();
            a1[r] * (h - phase.re)
        })
        .sum()
}

/// 𝒞̃_{2π}(ã₁) = min over |y| ≥ 2π of Â₁(y). In d = 1 the scan range follows from the
/// integration-by-parts envelope |∫ ã₁ cos| ≤ (TV + 2 max)/|y|; in higher dimension
/// a tensor scan over a bounded box is used.
fn tilde_c_2pi(model: &FiberModel, a1: &[f64], norm_a1: f64) -> Result<f64> {
    let grid = model.grid();
    let d = grid.dim();
    let two_pi = 2.0 * std::f64::consts::PI;
    let top = a1.iter().copied().fold(0.0, f64::max);
    let variation: f64 = match d {
        1 => (0..a1.len()).map(|k| (a1[(k + 1) % a1.len()] - a1[k]).abs()).sum(),
        _ => {
            // Worst axis: variation along the axis averaged over the transverse cells.
            let n = grid.n();
            (0..d)
                .map(|axis| {
                    let stride = n.pow(axis as u32);
                    (0..grid.len())
                        .map(|r| {
                            let k = grid.multi_index(r);
                            let next = if k[axis] + 1 == n { r + stride - n * stride } else { r + stride };
                            (a1[next] - a1[r]).abs()
                        })
                        .sum::<f64>()
                        / n.pow(d as u32 - 1) as f64
                })
                .fold(0.0, f64::max)
        }
    };
    let envelope = (d as f64).sqrt() * (variation + 2.0 * top);
    if d == 1 {
        let f = |s: f64| Ok(truncated_symbol(model, a1, &[s]));
        let mut hi = 4.0 * two_pi;
        loop {
            let best = scan_minimum(&f, two_pi, hi, 0.02)?;
            if norm_a1 - envelope / hi >= best || hi > 1e5 {
                return Ok(best);
            }
            hi *= 2.0;
        }
    }
    // Tensor scan of [−Y, Y]ᵈ outside the ball of radius 2π, capped in size.
    let hi = (4.0 * two_pi).max(envelope / (0.1 * norm_a1).max(1e-300)).min(60.0);
    let budget: f64 = if d == 2 { 240_000.0 } else { 200_000.0 };
    let per_axis = budget.powf(1.0 / d as f64).floor() as usize;
    let step = 2.0 * hi / per_axis as f64;
    let mut best = f64::INFINITY;
    let mut y = vec![0.0; d];
    for flat in 0..per_axis.pow(d as u32) {
        let mut rest = flat;
        for slot in y.iter_mut() {
            *slot = -hi + step * (rest % per_axis) as f64;
            rest /= per_axis;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < two_pi {
            continue;
        }
        best = best.min(truncated_symbol(model, a1, &y));
    }
    // The sphere |y| = 2π itself, where the minimum usually sits.
    let samples = 720;
    for k in 0..samples {
        let angle = std::f64::consts::PI * k as f64 / samples as f64;
        let mut dir = vec![0.0; d];
        dir[0] = angle.cos();
        dir[1] = angle.sin();
        let y: Vec<f64> = dir.iter().map(|v| v * two_pi).collect();
        best = best.min(truncated_symbol(model, a1, &y));
    }
    Ok(best)
}

/// 𝔠(ã, μ) from the rearrangement argument, with t₀ the largest admissible grid quantum.
pub fn rearrangement_constant(model: &FiberModel) -> Result<RearrangementConstant> {
    let grid = model.grid();
    let d = grid.dim();
    let a = model.kernel_at_zero();
    let h = grid.weight();
    let (mu_lo, mu_hi) = (model.mu().lower(), model.mu().upper());
    let a1: Vec<f64> = a.iter().map(|v| v.min(1.0)).collect();
    let norm_a1: f64 = a1.iter().sum::<f64>() * h;
    if !(norm_a1 > 0.0) {
        return Err(Error::InvalidKernel("periodized kernel vanishes".into()));
    }
    // F over [−2,2]ᵈ: 4ᵈ periodic copies of Ω.
    let copies = REARRANGEMENT_CUBE.powi(d as i32);
    let big_f = |t: f64| -> Result<f64> { Ok(copies * rearrangement_f(a, h, t / copies)?) };
    let admissible = |t: f64| -> Result<bool> { Ok(mu_hi * big_f(t)? / (mu_lo * norm_a1) <= 0.5) };
    let quanta = (copies as usize) * grid.len();
    if !admissible(h)? {
        return Err(Error::RearrangementTooCoarse);
    }
    // F is nondecreasing, so the admissible quanta form an initial segment.
    let (mut lo, mut hi) = (1usize, quanta);
    if admissible(hi as f64 * h)? {
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if admissible(mid as f64 * h)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t0 = lo as f64 * h;
    let tilde = tilde_c_2pi(model, &a1, norm_a1)?;
    let first_branch = (t0 * mu_lo * tilde).powi(-2);
    let ratio = mu_hi / mu_lo;
    let second_branch = (ratio + (2.0 / (mu_lo * norm_a1) + ratio * ratio).sqrt()).powi(2);
    Ok(RearrangementConstant {
        value: first_branch.max(second_branch),
        t0,
        tilde_c_2pi: tilde,
        norm_a1,
        first_branch,
        second_branch,
    })
}

/// Measured sup norms of v_j against the two a priori L∞ bounds.
#[derive(Debug, Clone, Serialize)]
pub struct SupBoundReport {
    pub max_abs: Vec<f64>,
    pub rearrangement_bound: f64,
    pub closed_form_bound: f64,
    pub rearrangement_margin: f64,
    pub closed_form_margin: f64,
    pub rearrangement: RearrangementConstant,
    pub pass: Vec<bool>,
}

impl SupBoundReport {
    pub fn passed(&self) -> bool {
        self.pass.iter().all(|p| *p)
    }
}

/// Checks ‖v_j‖_∞ ≤ μ₊M₁𝔠 and ‖v_j‖_∞ ≤ μ₊M₁(1/(μ₋‖ã‖₁) + μ₊‖ã‖₂/(μ₋²𝒞_π‖ã‖₁)).
pub fn check_sup_bound(
    model: &FiberModel,
    cell: &CellSolution,
    rearrangement: &RearrangementConstant,
) -> Result<SupBoundReport> {
    let (mu_lo, mu_hi) = (model.mu().lower(), model.mu().upper());
    let m1 = moment(model.kernel(), 1)?;
    let h = model.grid().weight();
    let a = model.kernel_at_zero();
    let l1: f64 = a.iter().sum::<f64>() * h;
    let l2: f64 = (a.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    let c_pi = symbol_min_outside(model.kernel(), std::f64::consts::PI)?;
    let rearrangement_bound = mu_hi * m1 * rearrangement.value;
    let closed_form_bound = mu_hi * m1 * (1.0 / (mu_lo * l1) + mu_hi * l2 / (mu_lo * mu_lo * c_pi * l1));
    let worst = cell.sup_norms.iter().copied().fold(0.0, f64::max);
    let pass = cell.sup_norms.iter().map(|s| *s <= rearrangement_bound && *s <= closed_form_bound).collect();
    Ok(SupBoundReport {
        max_abs: cell.sup_norms.clone(),
        rearrangement_bound,
        closed_form_bound,
        rearrangement_margin: rearrangement_bound - worst,
        closed_form_margin: closed_form_bound - worst,
        rearrangement: rearrangement.clone(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernels::{KernelSpec, MuSpec};

    #[test]
    fn rearrangement_examples() {
        let f = [0.5, 2.0, 1.0, 0.0];
        assert!((rearrangement_on_cell(&f, 1.0).unwrap() - 0.875).abs() < 1e-15);
        assert!((rearrangement_on_cell(&f, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((rearrangement_on_cell(&f, 0.375).unwrap() - 0.625).abs() < 1e-15);
        assert!((rearrangement_on_cell(&[3.0; 8], 0.3).unwrap() - 0.9).abs() < 1e-15);
        assert!(rearrangement_on_cell(&f, 0.0).is_err());
    }

    #[test]
    fn constant_mu_has_trivial_correctors() {
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        let model = FiberModel::new(&k, &MuSpec::constant(1, 2.0).unwrap(), Grid::new(1, 32).unwrap()).unwrap();
        let cell = solve_cell_problem(&model).unwrap();
        assert!(cell.sup_norms[0] < 1e-14);
        for x in &cell.wkl[0][0] {
            assert!((x - 2.0 / 12.0).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_cosine_case() {
        // Box r=½ with μ = 1 + ½cos2πx cos2πy: w₁ = v₁ = sin(4πx)/(8π).
        let k = KernelSpec::box_kernel(1, 0.5, 1.0).unwrap();
        let model =
            FiberModel::new(&k, &MuSpec::cosine_product(1, 1.0, 0.5).unwrap(), Grid::new(1, 64).unwrap()).unwrap();
        let cell = solve_cell_problem(&model).unwrap();
        let scale = 8.0 * std::f64::consts::PI;
        for (i, (v, w)) in cell.v[0].iter().zip(&cell.w[0]).enumerate() {
            let exact = (4.0 * std::f64::consts::PI * i as f64 / 64.0).sin() / scale;
            assert!((w - exact).abs() < 1e-3 / scale, "{i}: {w} vs {exact}");
            assert!((v - exact).abs() < 1e-3 / scale);
        }
    }

    #[test]
    fn fixed_point_agrees_with_direct_solve() {
        let k = KernelSpec::gaussian(1, 0.15, 1.0).unwrap();
        let model =
            FiberModel::new(&k, &MuSpec::cosine_product(1, 1.0, 0.5).unwrap(), Grid::new(1, 32).unwrap()).unwrap();
        let cell = solve_cell_problem(&model).unwrap();
        let fp = fixed_point_cell(&model, &cell.w[0], 0.5, 1e-13, 200_000).unwrap();
        assert!(fp.converged);
        let diff: f64 = fp.v.iter().zip(&cell.v[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = cell.v[0].iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm, "{diff} vs {norm}");
    }
}
