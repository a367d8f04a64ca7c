//! Experiment stages shared by the subcommands. Each stage returns its typed
//! results together with the checks it implies.

use nonloc_homog::cell::{
    check_sup_bound, fixed_point_cell, rearrangement_constant, solve_cell_problem_with, CellSolution, CellSolver,
    SupBoundReport,
};
use nonloc_homog::effective::{check_positivity, effective_matrix, EffectiveMatrix, PositivityReport};
use nonloc_homog::fiber::{quadrature_tolerance, FiberModel};
use nonloc_homog::grid::Grid;
use nonloc_homog::harness::{
    coercivity_check, constants_bundle, fiber_constant_check, lipschitz_check, rate_sweep, xi_grid, CoercivityReport,
    ConstantsBundle, FiberBoundReport, LipschitzReport, RateReport,
};
use nonloc_homog::kernels::{KernelSpec, MuSpec};
use nonloc_homog::linalg::{constant_projector, max_abs, operator_norm};
use nonloc_homog::threshold::{
    geometric_xi_list, riesz_projection, spectral_projector_oracle, threshold_sweep, ResidualConstants,
    ThresholdContext, ThresholdReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::check::Check;
use crate::config::{ExperimentConfig, Tolerances};
use crate::CliError;

pub const PROJECTION_TOLERANCE: f64 = 1e-8;
pub const IDEMPOTENCY_TOLERANCE: f64 = 1e-9;
pub const ROUTE_TOLERANCE: f64 = 1e-8;
pub const CELL_RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const CELL_MEAN_TOLERANCE: f64 = 1e-10;
pub const FIXED_POINT_TOLERANCE: f64 = 1e-8;
pub const G3_EXACTNESS: f64 = 1e-9;

/// Minimum fitted slopes of the threshold residuals ‖F−P‖, ‖F−P−[F]₁‖,
/// ‖𝔸F−[G]₂‖ and ‖𝔸F−[G]₂−[G]₃‖.
pub const THRESHOLD_SLOPES: [f64; 4] = [0.9, 1.9, 2.8, 3.8];
/// Minimum fitted slopes of the plain and corrected whole-space errors.
pub const RATE_SLOPES: [f64; 2] = [0.9, 1.85];

/// Residuals below this fraction of their natural scale (‖P‖ = 1 for F, λ(ξ) for 𝔸F)
/// are round-off, and their slopes carry no information.
const ROUND_OFF_FLOOR: f64 = 1e-12;

const FIXED_POINT_RELAXATION: f64 = 0.5;
const FIXED_POINT_STOP: f64 = 1e-13;
const FIXED_POINT_MAX_ITERATIONS: usize = 200_000;

/// Everything derived from a configuration that more than one stage needs.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub kernel: KernelSpec,
    pub mu: MuSpec,
    pub grid: Grid,
    pub model: FiberModel,
    pub solver: CellSolver,
    pub cell: CellSolution,
    pub effective: EffectiveMatrix,
    pub constants: ConstantsBundle,
    /// Quadrature tolerance τ_q.
    pub tau: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Limits {
    projection: f64,
    idempotency: f64,
    route: f64,
    cell_residual: f64,
    cell_mean: f64,
    fixed_point: f64,
    g3_exactness: f64,
}

impl Limits {
    fn from(t: &Tolerances) -> Self {
        Self {
            projection: t.projection.unwrap_or(PROJECTION_TOLERANCE),
            idempotency: t.idempotency.unwrap_or(IDEMPOTENCY_TOLERANCE),
            route: t.route.unwrap_or(ROUTE_TOLERANCE),
            cell_residual: t.cell_residual.unwrap_or(CELL_RESIDUAL_TOLERANCE),
            cell_mean: t.cell_mean.unwrap_or(CELL_MEAN_TOLERANCE),
            fixed_point: t.fixed_point.unwrap_or(FIXED_POINT_TOLERANCE),
            g3_exactness: t.g3_exactness.unwrap_or(G3_EXACTNESS),
        }
    }
}

impl Experiment {
    /// Builds the fiber model, solves the cell problems and computes g⁰, the
    /// constants and τ_q. `seed` overrides the configured seed.
    pub fn prepare(config: ExperimentConfig, seed: Option<u64>) -> Result<Self, CliError> {
        let kernel = config.kernel_spec()?;
        let mu = config.mu_spec()?;
        let grid = config.grid()?;
        let model = FiberModel::new(&kernel, &mu, grid)?;
        let solver = CellSolver::new(&model)?;
        let cell = solve_cell_problem_with(&model, &solver)?;
        let effective = effective_matrix(&model, &cell)?;
        let mut constants = constants_bundle(&kernel, &mu)?;
        constants.attach_cell(&model, &cell)?;
        let tau = match config.tolerances().tau {
            Some(t) => t,
            None => quadrature_tolerance(&kernel, &mu, &grid)?,
        };
        let seed = seed.unwrap_or_else(|| config.seed());
        Ok(Self { config, kernel, mu, grid, model, solver, cell, effective, constants, tau, seed })
    }

    fn limits(&self) -> Limits {
        Limits::from(&self.config.tolerances())
    }
}

// ---------------------------------------------------------------- constants

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsOutcome {
    /// Keyed by the conventional symbol names.
    pub table: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<Check>,
}

pub fn constants_stage(exp: &Experiment) -> ConstantsOutcome {
    let k = &exp.constants;
    let mut table = serde_json::Map::new();
    let mut put = |key: &str, v: Option<f64>| {
        table.insert(key.to_string(), v.map_or(serde_json::Value::Null, serde_json::Value::from));
    };
    put("mu_minus", Some(k.mu_lower));
    put("mu_plus", Some(k.mu_upper));
    for (i, m) in k.moments.iter().enumerate() {
        put(&format!("M{i}"), Some(*m));
    }
    put("C_pi", Some(k.c_pi));
    put("M_cal", Some(k.m_cal));
    put("r_a", Some(k.r_a));
    put("C_r", Some(k.c_r));
    put("C_a", Some(k.c_a));
    put("delta0", Some(k.delta0));
    put("d0_bound", Some(k.d0_bound));
    put("C1", Some(k.c1));
    put("C2", Some(k.c2));
    put("C3", Some(k.c3));
    put("C4", Some(k.c4));
    put("C5", Some(k.c5));
    put("C6", Some(k.c6));
    put("C5_tilde", Some(k.tilde_c5));
    put("C6_tilde", Some(k.tilde_c6));
    put("bold_C1", Some(k.bold_c1));
    put("bold_C2", k.bold_c2);
    put("tilde_C_2pi", k.tilde_c_2pi);
    put("frak_C", k.frak_c);
    put("lipschitz", Some(k.lipschitz()));
    put("tau_q", Some(exp.tau));
    let checks = vec![
        Check::holds("constants.valid", k.validate().is_ok()),
        Check::at_most("constants.delta0_below_pi", k.delta0, std::f64::consts::PI),
    ];
    ConstantsOutcome { table, checks }
}

// ---------------------------------------------------------------- cell

#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    pub residuals: Vec<f64>,
    pub means: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// ‖v_fixed-point − v_direct‖ / ‖v_direct‖ per component (absolute when v = 0).
    pub fixed_point_agreement: Vec<f64>,
    pub fixed_point_iterations: Vec<usize>,
    pub fixed_point_converged: Vec<bool>,
    pub sup_bound: SupBoundReport,
    pub checks: Vec<Check>,
}

pub fn cell_stage(exp: &Experiment) -> Result<CellOutcome, CliError> {
    let lim = exp.limits();
    let cell = &exp.cell;
    let means: Vec<f64> = cell.v.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let fixed: Vec<_> = cell
        .w
        .par_iter()
        .map(|w| fixed_point_cell(&exp.model, w, FIXED_POINT_RELAXATION, FIXED_POINT_STOP, FIXED_POINT_MAX_ITERATIONS))
        .collect::<Result<_, _>>()?;
    let agreement: Vec<f64> = fixed
        .iter()
        .zip(&cell.v)
        .map(|(fp, v)| {
            let diff = fp.v.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .collect();
    let rearrangement = rearrangement_constant(&exp.model)?;
    let sup_bound = check_sup_bound(&exp.model, cell, &rearrangement)?;
    let mut checks = Vec::new();
    for j in 0..cell.dim() {
        checks.push(Check::at_most(format!("cell.residual[{j}]"), cell.residuals[j], lim.cell_residual));
        checks.push(Check::at_most(format!("cell.mean[{j}]"), means[j].abs(), lim.cell_mean));
        let mut fp = Check::at_most(format!("cell.fixed_point_agreement[{j}]"), agreement[j], lim.fixed_point);
        if !fixed[j].converged {
            fp = fp.with_note(format!("fixed point stopped after {} iterations", fixed[j].iterations));
        }
        checks.push(fp);
    }
    let worst = cell.sup_norms.iter().copied().fold(0.0, f64::max);
    checks.push(Check::at_most("cell.sup_bound_rearrangement", worst, sup_bound.rearrangement_bound));
    checks.push(Check::at_most("cell.sup_bound_closed_form", worst, sup_bound.closed_form_bound));
    Ok(CellOutcome {
        residuals: cell.residuals.clone(),
        means,
        sup_norms: cell.sup_norms.clone(),
        fixed_point_agreement: agreement,
        fixed_point_iterations: fixed.iter().map(|f| f.iterations).collect(),
        fixed_point_converged: fixed.iter().map(|f| f.converged).collect(),
        sup_bound,
        checks,
    })
}

/// Rows of (node coordinates, v₁..v_d).
pub fn cell_table(exp: &Experiment) -> (Vec<String>, Vec<Vec<f64>>) {
    let d = exp.grid.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend((1..=d).map(|j| format!("v{j}")));
    let rows = (0..exp.grid.len())
        .map(|i| {
            let node = exp.grid.node(i);
            let mut row: Vec<f64> = node[..d].to_vec();
            row.extend(exp.cell.v.iter().map(|v| v[i]));
            row
        })
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------- effective

#[derive(Debug, Clone, Serialize)]
pub struct EffectiveOutcome {
    /// Row-major g⁰.
    pub g0: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    /// μ₋C(a).
    pub floor: f64,
    pub positivity: PositivityReport,
    pub checks: Vec<Check>,
}

pub fn effective_stage(exp: &Experiment) -> EffectiveOutcome {
    let floor = exp.constants.coercivity();
    let positivity = check_positivity(&exp.effective, floor, exp.tau);
    let checks = vec![
        Check::at_least("effective.positive_definite", exp.effective.min_eigenvalue, f64::MIN_POSITIVE),
        Check::at_least("effective.coercivity_floor", exp.effective.min_eigenvalue, floor - exp.tau),
    ];
    EffectiveOutcome {
        g0: exp.effective.g0_rows(),
        min_eigenvalue: exp.effective.min_eigenvalue,
        floor,
        positivity,
        checks,
    }
}

// ---------------------------------------------------------------- threshold

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSample {
    pub xi: Vec<f64>,
    pub difference: f64,
    pub idempotency_defect: f64,
    pub contour_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdOutcome {
    pub directions: Vec<Vec<f64>>,
    pub reports: Vec<ThresholdReport>,
    pub projections: Vec<ProjectionSample>,
    /// max over (k,l) of ‖G_kl − g_kl P‖ / max|g|.
    pub route_defect: f64,
    /// max over rows of ‖P[G]₃P‖ / ‖[G]₃‖.
    pub g3_ratio: f64,
    pub checks: Vec<Check>,
}

fn slope_check(name: String, slope: f64, limit: f64, relative_size: f64) -> Check {
    let check = Check::at_least(name, slope, limit);
    if relative_size < ROUND_OFF_FLOOR {
        check.skipped(format!("relative residual {relative_size:.1e} is at round-off level"))
    } else {
        check
    }
}

pub fn threshold_stage(exp: &Experiment) -> Result<ThresholdOutcome, CliError> {
    let lim = exp.limits();
    let k = &exp.constants;
    let ctx = ThresholdContext::new(
        &exp.model,
        &exp.cell,
        &exp.solver,
        &exp.effective,
        k.d0_bound,
        exp.config.contour_points(),
    )?;
    let constants = ResidualConstants { c1: k.c1, c2: k.c2, c3: k.c3, c4: k.c4 };
    let directions = exp.config.threshold_directions();
    let count = exp.config.threshold_count();
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for (di, dir) in directions.iter().enumerate() {
        let xs = geometric_xi_list(k.delta0, dir, count);
        let report = threshold_sweep(&ctx, &xs, Some(constants), exp.tau)?;
        let window = &report.rows[report.rows.len().saturating_sub(nonloc_homog::threshold::SLOPE_WINDOW)..];
        let peak = |f: fn(&nonloc_homog::threshold::ThresholdRow) -> f64| window.iter().map(f).fold(0.0, f64::max);
        let relative = |f: fn(&nonloc_homog::threshold::ThresholdRow) -> f64| {
            window.iter().map(|r| f(r) / r.eigenvalue.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
        };
        let s = &report.slopes;
        let names = ["f_minus_p", "f_minus_p_minus_f1", "af_minus_g2", "af_minus_g2_minus_g3"];
        let values = [s.f_minus_p, s.f_minus_p_minus_f1, s.af_minus_g2, s.af_minus_g2_minus_g3];
        let peaks = [
            peak(|r| r.f_minus_p),
            peak(|r| r.f_minus_p_minus_f1),
            relative(|r| r.af_minus_g2),
            relative(|r| r.af_minus_g2_minus_g3),
        ];
        for i in 0..4 {
            checks.push(slope_check(
                format!("threshold.slope.{}[{di}]", names[i]),
                values[i],
                THRESHOLD_SLOPES[i],
                peaks[i],
            ));
        }
        if let Some(m) = &report.margins {
            let margins = [
                ("f_minus_p", m.f_minus_p),
                ("f_minus_p_minus_f1", m.f_minus_p_minus_f1),
                ("af_minus_g2", m.af_minus_g2),
                ("af_minus_g2_minus_g3", m.af_minus_g2_minus_g3),
                ("f1", m.f1),
            ];
            for (name, margin) in margins {
                checks.push(Check::at_least(format!("threshold.bound_margin.{name}[{di}]"), margin, 0.0));
            }
        }
        let fit = &report.first_order;
        checks.push(Check::at_most(format!("threshold.first_order.intercept[{di}]"), fit.intercept.abs(), exp.tau));
        checks.push(Check::at_most(format!("threshold.first_order.linear[{di}]"), fit.linear.abs(), exp.tau));
        reports.push(report);
    }
    let rows = || reports.iter().flat_map(|r| &r.rows);
    let g3_ratio = rows().map(|row| if row.pg3p == 0.0 { 0.0 } else { row.pg3p / row.g3_norm }).fold(0.0, f64::max);
    // Natural size of [G]₃ is μ₊M₃|ξ|³; far below it, [G]₃ is round-off and the ratio is noise.
    let g3_size = rows().map(|row| row.g3_norm / (k.mu_upper * k.moments[3] * row.xi_norm.powi(3))).fold(0.0, f64::max);
    let mut g3_check = Check::at_most("threshold.pg3p_exactness", g3_ratio, lim.g3_exactness);
    if g3_size < ROUND_OFF_FLOOR {
        g3_check = g3_check.skipped(format!("[G]3 vanishes to round-off (relative size {g3_size:.1e})"));
    }
    checks.push(g3_check);

    let sample = geometric_xi_list(k.delta0, &directions[0], 10);
    let contour = *ctx.contour();
    let projections = sample
        .par_iter()
        .map(|xi| -> Result<ProjectionSample, CliError> {
            let op = exp.model.assemble(xi)?;
            let riesz = riesz_projection(&op, &contour)?;
            let (_, oracle) = spectral_projector_oracle(&op);
            Ok(ProjectionSample {
                xi: xi.clone(),
                difference: operator_norm(&(&riesz.matrix - oracle))?,
                idempotency_defect: riesz.idempotency_defect,
                contour_points: riesz.points,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst_diff = projections.iter().map(|p| p.difference).fold(0.0, f64::max);
    let worst_idem = projections.iter().map(|p| p.idempotency_defect).fold(0.0, f64::max);
    checks.push(Check::at_most("threshold.projection_equivalence", worst_diff, lim.projection));
    checks.push(Check::at_most("threshold.idempotency", worst_idem, lim.idempotency));

    let d = exp.grid.dim();
    let p = constant_projector(exp.grid.len());
    let g = &exp.effective.gkl_raw;
    let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut route_defect = 0.0f64;
    for a in 0..d {
        for b in a..d {
            let diff = ctx.g_kl(a, b)? - &p * nonloc_homog::linalg::c(g[(a, b)], 0.0);
            route_defect = route_defect.max(max_abs(&diff).max(operator_norm(&diff)?) / scale);
        }
    }
    checks.push(Check::at_most("threshold.route_equality", route_defect, lim.route));
    Ok(ThresholdOutcome { directions, reports, projections, route_defect, g3_ratio, checks })
}

pub const THRESHOLD_COLUMNS: [&str; 11] = [
    "direction",
    "xi_norm",
    "f_minus_p",
    "f_minus_p_minus_f1",
    "af_minus_g2",
    "af_minus_g2_minus_g3",
    "pg3p",
    "g3_norm",
    "eigenvalue",
    "contour_points",
    "idempotency_defect",
];

// ---------------------------------------------------------------- rates

#[derive(Debug, Clone, Serialize)]
pub struct RatesOutcome {
    pub rates: RateReport,
    pub fiber_bounds: FiberBoundReport,
    pub checks: Vec<Check>,
}

pub fn rates_stage(exp: &Experiment) -> Result<RatesOutcome, CliError> {
    let k = &exp.constants;
    let (xs, spacing) = xi_grid(exp.grid.dim(), exp.config.xi_per_axis(), exp.config.xi_refinement());
    let epsilons = exp.config.epsilons();
    let rates = rate_sweep(&exp.model, &exp.effective, &exp.cell, k, &xs, spacing, &epsilons, exp.tau)?;
    let mut near: Vec<Vec<f64>> = Vec::new();
    for dir in exp.config.threshold_directions() {
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        near.push(dir.iter().map(|v| v * k.delta0 / len).collect());
        near.extend(geometric_xi_list(k.delta0, &dir, exp.config.threshold_count()));
    }
    near.push(vec![0.0; exp.grid.dim()]);
    let fiber_bounds = fiber_constant_check(&exp.model, &exp.effective, &exp.cell, k, &near, &epsilons, exp.tau)?;

    let mut checks = vec![
        Check::at_least("rates.slope_plain", rates.slope_plain, RATE_SLOPES[0]),
        Check::at_least("rates.slope_corrected", rates.slope_corrected, RATE_SLOPES[1]),
    ];
    let worst =
        |f: &dyn Fn(&nonloc_homog::harness::RateRow) -> f64| rates.rows.iter().map(f).fold(f64::INFINITY, f64::min);
    checks.push(Check::at_least("rates.bound_plain_margin", worst(&|r| r.bound_plain + r.slack - r.ws_plain), 0.0));
    checks.push(Check::at_least(
        "rates.bound_corrected_margin",
        worst(&|r| r.bound_corrected + r.slack - r.ws_corrected),
        0.0,
    ));
    let last = rates.rows.last().expect("ε list is nonempty");
    if exp.mu.is_constant() {
        let gap = (last.fiber_sup_plain - last.fiber_sup_corrected).abs();
        checks.push(Check::at_most("rates.corrector_vanishes", gap, 1e-12 * last.fiber_sup_plain.max(1.0)));
    } else {
        checks.push(Check::at_least(
            "rates.corrector_helps",
            last.fiber_sup_plain - last.fiber_sup_corrected,
            f64::MIN_POSITIVE,
        ));
    }
    checks.push(Check::at_most("fiber.plain_vs_c5", fiber_bounds.worst_plain_ratio, 1.0));
    checks.push(Check::at_most("fiber.corrected_vs_c6", fiber_bounds.worst_corrected_ratio, 1.0));
    Ok(RatesOutcome { rates, fiber_bounds, checks })
}

pub const RATE_COLUMNS: [&str; 8] = [
    "epsilon",
    "fiber_sup_plain",
    "fiber_sup_corrected",
    "ws_plain",
    "ws_corrected",
    "bound_plain",
    "bound_corrected",
    "slack",
];

// ---------------------------------------------------------------- suites

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub coercivity: CoercivityReport,
    pub lipschitz: LipschitzReport,
    pub checks: Vec<Check>,
}

/// Seeded ξ, η pairs uniform in [−π, π)^d.
pub fn random_pairs(dim: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-PI..PI)).collect::<Vec<f64>>();
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

pub fn suite_stage(exp: &Experiment) -> Result<SuiteOutcome, CliError> {
    let d = exp.grid.dim();
    let (mut xs, _) = xi_grid(d, exp.config.xi_per_axis(), exp.config.xi_refinement());
    // Corners of the dual cell, where |ξ|² is largest.
    xs.push(vec![std::f64::consts::PI; d]);
    let coercivity = coercivity_check(&exp.model, &exp.constants, &xs, exp.tau)?;
    let pairs = random_pairs(d, exp.config.lipschitz_pairs(), exp.seed);
    let lipschitz = lipschitz_check(&exp.model, &exp.constants, &pairs, exp.tau)?;
    let checks = vec![
        Check::at_least("coercivity.lowest_eigenvalue_margin", coercivity.worst_margin, -exp.tau),
        Check::at_least("coercivity.gap_at_zero", coercivity.gap, coercivity.gap_floor - exp.tau),
        Check::at_most("lipschitz.worst_excess", lipschitz.worst_excess, exp.tau),
    ];
    Ok(SuiteOutcome { coercivity, lipschitz, checks })
}
