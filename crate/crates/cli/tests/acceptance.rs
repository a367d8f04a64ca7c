//! The twelve acceptance criteria, one PASS/FAIL line each.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nonloc_homog::cell::solve_cell_problem;
use nonloc_homog::effective::effective_matrix;
use nonloc_homog::fiber::FiberModel;
use nonloc_homog::grid::Grid;
use nonloc_homog::harness::lipschitz_check;
use nonloc_homog::kernels::{KernelSpec, MuSpec};
use nonloc_homog_cli::config::ExperimentConfig;
use nonloc_homog_cli::run::{run, Command, RunOptions};
use nonloc_homog_cli::stages::{
    cell_stage, random_pairs, rates_stage, suite_stage, threshold_stage, Experiment, ThresholdOutcome,
};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    number: usize,
    title: &'static str,
    outcome: Outcome,
}

impl Criterion {
    fn passed(&self) -> bool {
        matches!(self.outcome, Ok((true, _)))
    }

    fn line(&self) -> String {
        let (tag, detail) = match &self.outcome {
            Ok((true, d)) => ("PASS", d.clone()),
            Ok((false, d)) => ("FAIL", d.clone()),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        format!("{tag} criterion {:>2} ({}): {detail}", self.number, self.title)
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Result<ExperimentConfig, String> {
    ExperimentConfig::load(&configs_dir().join(name)).map_err(|e| e.to_string())
}

fn prepare(name: &str) -> Result<Experiment, String> {
    Experiment::prepare(load(name)?, None).map_err(|e| e.to_string())
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn trivial_effective_matrix() -> Outcome {
    let start = Instant::now();
    let kernel = KernelSpec::box_kernel(1, 0.5, 1.0).map_err(|e| e.to_string())?;
    let mu = MuSpec::constant(1, 1.0).map_err(|e| e.to_string())?;
    let model =
        FiberModel::new(&kernel, &mu, Grid::new(1, 128).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let cell = solve_cell_problem(&model).map_err(|e| e.to_string())?;
    let g = effective_matrix(&model, &cell).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let g0 = g.g0[(0, 0)];
    let rel = (g0 - 1.0 / 24.0).abs() * 24.0;
    let ok = rel <= 1e-6 && elapsed < Duration::from_secs(10);
    Ok((ok, format!("g0 = {g0:.15}, relative error {rel:.2e} <= 1e-6, runtime {} < 10 s", secs(elapsed))))
}

fn main() -> ExitCode {
    let names = ["default.json", "gaussian_constant.json", "exponential_cosine.json", "gaussian_2d.json"];
    let experiments: Vec<(&str, Result<Experiment, String>)> = names.iter().map(|n| (*n, prepare(n))).collect();
    let default = experiments[0].1.as_ref();

    let mut criteria = Vec::new();
    let mut push = |number, title, outcome| criteria.push(Criterion { number, title, outcome });

    push(1, "trivial effective matrix", trivial_effective_matrix());

    let cell = default.map_err(Clone::clone).and_then(|e| cell_stage(e).map_err(|e| e.to_string()));
    push(
        2,
        "cell-problem double oracle",
        cell.as_ref().map_err(Clone::clone).map(|c| {
            let (fp, res, mean) = (c.fixed_point_agreement[0], c.residuals[0], c.means[0].abs());
            (
                fp <= 1e-8 && res <= 1e-9 && mean <= 1e-10,
                format!(
                    "fixed point vs direct {fp:.2e} <= 1e-8 ({} iterations), residual {res:.2e} <= 1e-9, |mean| {mean:.2e} <= 1e-10",
                    c.fixed_point_iterations[0]
                ),
            )
        }),
    );
    push(
        3,
        "L-infinity bounds on the corrector",
        cell.as_ref().map_err(Clone::clone).map(|c| {
            let s = &c.sup_bound;
            let sup = c.sup_norms[0];
            (
                s.rearrangement_margin > 0.0 && s.closed_form_margin > 0.0,
                format!(
                    "max|v1| = {sup:.4e}; rearrangement bound {:.4e} (margin {:.4e}), closed-form bound {:.4e} (margin {:.4e})",
                    s.rearrangement_bound, s.rearrangement_margin, s.closed_form_bound, s.closed_form_margin
                ),
            )
        }),
    );

    let mut threshold_times = Vec::new();
    let thresholds: Vec<(&str, Result<ThresholdOutcome, String>)> = experiments
        .iter()
        .map(|(name, exp)| {
            let start = Instant::now();
            let out = exp.as_ref().map_err(Clone::clone).and_then(|e| threshold_stage(e).map_err(|e| e.to_string()));
            threshold_times.push(start.elapsed());
            (*name, out)
        })
        .collect();
    let collect = |f: &dyn Fn(&str, &ThresholdOutcome) -> (bool, String)| -> Outcome {
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, t) in &thresholds {
            let (pass, detail) = f(name, t.as_ref().map_err(|e| format!("{name}: {e}"))?);
            ok &= pass;
            parts.push(format!("{}: {detail}", name.trim_end_matches(".json")));
        }
        Ok((ok, parts.join("; ")))
    };

    push(
        4,
        "projection equivalence",
        collect(&|_, t| {
            let diff = t.projections.iter().map(|p| p.difference).fold(0.0, f64::max);
            let idem = t.projections.iter().map(|p| p.idempotency_defect).fold(0.0, f64::max);
            (
                t.projections.len() == 10 && diff <= 1e-8 && idem <= 1e-9,
                format!(
                    "{} samples, difference {diff:.1e} <= 1e-8, idempotency {idem:.1e} <= 1e-9",
                    t.projections.len()
                ),
            )
        }),
    );

    push(
        5,
        "threshold slopes",
        thresholds[0].1.as_ref().map_err(Clone::clone).map(|t| {
            let s = &t.reports[0].slopes;
            let values = [s.f_minus_p, s.f_minus_p_minus_f1, s.af_minus_g2, s.af_minus_g2_minus_g3];
            let floors = [0.9, 1.9, 2.8, 3.8];
            let ok = values.iter().zip(floors).all(|(v, f)| *v >= f) && threshold_times[0] < Duration::from_secs(120);
            (
                ok,
                format!(
                    "slopes {:.3}, {:.3}, {:.3}, {:.3} >= 0.9, 1.9, 2.8, 3.8 over {} points; runtime {} < 120 s",
                    values[0],
                    values[1],
                    values[2],
                    values[3],
                    t.reports[0].rows.len(),
                    secs(threshold_times[0])
                ),
            )
        }),
    );

    push(
        6,
        "exactness of the compressed third-order term",
        collect(&|name, t| {
            let exp =
                experiments.iter().find(|(n, _)| *n == name).and_then(|(_, e)| e.as_ref().ok()).expect("prepared");
            let k = &exp.constants;
            let natural = |row: &nonloc_homog::threshold::ThresholdRow| k.mu_upper * k.moments[3] * row.xi_norm.powi(3);
            let rows = || t.reports.iter().flat_map(|r| &r.rows);
            let g3_size = rows().map(|r| r.g3_norm / natural(r)).fold(0.0, f64::max);
            if g3_size < 1e-12 {
                // [G]3 vanishes identically here; its own norm is round-off, so compare against its natural scale.
                let pg3p = rows().map(|r| r.pg3p / natural(r)).fold(0.0, f64::max);
                (
                    pg3p <= 1e-9,
                    format!("[G]3 vanishes (||[G]3|| <= {g3_size:.1e} mu+M3|xi|^3); max ||P[G]3P||/(mu+M3|xi|^3) = {pg3p:.1e} <= 1e-9"),
                )
            } else {
                (t.g3_ratio <= 1e-9, format!("max ||P[G]3P||/||[G]3|| = {:.1e} <= 1e-9", t.g3_ratio))
            }
        }),
    );

    push(
        7,
        "route equality",
        collect(&|_, t| (t.route_defect <= 1e-8, format!("relative defect {:.1e} <= 1e-8", t.route_defect))),
    );

    let start = Instant::now();
    let rates = default.map_err(Clone::clone).and_then(|e| rates_stage(e).map_err(|e| e.to_string()));
    let rates_time = start.elapsed();
    push(
        8,
        "main rates",
        rates.as_ref().map_err(Clone::clone).map(|r| {
            let r = &r.rates;
            let plain = r.rows.iter().map(|row| row.bound_plain + row.slack - row.ws_plain).fold(f64::INFINITY, f64::min);
            let corrected =
                r.rows.iter().map(|row| row.bound_corrected + row.slack - row.ws_corrected).fold(f64::INFINITY, f64::min);
            let ok = r.slope_plain >= 0.9
                && r.slope_corrected >= 1.85
                && plain >= 0.0
                && corrected >= 0.0
                && r.rows.len() == 7
                && rates_time < Duration::from_secs(300);
            (
                ok,
                format!(
                    "slopes {:.3} >= 0.9 and {:.3} >= 1.85 over {} epsilons and {} xi; bound margins {plain:.3e}, {corrected:.3e} >= 0; runtime {} < 300 s",
                    r.slope_plain,
                    r.slope_corrected,
                    r.rows.len(),
                    r.xi_points,
                    secs(rates_time)
                ),
            )
        }),
    );

    push(
        9,
        "fiber-level constant domination",
        rates.as_ref().map_err(Clone::clone).map(|r| {
            let f = &r.fiber_bounds;
            (
                f.worst_plain_ratio <= 1.0 && f.worst_corrected_ratio <= 1.0,
                format!(
                    "{} (xi, eps) samples; worst error/(bound + slack): plain {:.3e} <= 1, corrected {:.3e} <= 1",
                    f.rows.len(),
                    f.worst_plain_ratio,
                    f.worst_corrected_ratio
                ),
            )
        }),
    );

    let suites: Outcome = (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, exp) in &experiments {
            let exp = exp.as_ref().map_err(|e| format!("{name}: {e}"))?;
            let s = suite_stage(exp).map_err(|e| e.to_string())?;
            let c = &s.coercivity;
            ok &= c.worst_margin >= -exp.tau && c.gap >= c.gap_floor - exp.tau;
            parts.push(format!(
                "{}: margin {:.2e} >= -{:.1e}, gap {:.4e} >= {:.4e}",
                name.trim_end_matches(".json"),
                c.worst_margin,
                exp.tau,
                c.gap,
                c.gap_floor - exp.tau
            ));
        }
        Ok((ok, parts.join("; ")))
    })();
    push(10, "coercivity", suites);

    let lipschitz: Outcome = (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, exp) in &experiments {
            let exp = exp.as_ref().map_err(|e| format!("{name}: {e}"))?;
            let pairs = random_pairs(exp.grid.dim(), 100, exp.seed);
            let l = lipschitz_check(&exp.model, &exp.constants, &pairs, exp.tau).map_err(|e| e.to_string())?;
            ok &= l.pairs == 100 && l.worst_excess <= exp.tau;
            parts.push(format!(
                "{}: worst excess {:.2e} <= {:.1e}",
                name.trim_end_matches(".json"),
                l.worst_excess,
                exp.tau
            ));
        }
        Ok((ok, parts.join("; ")))
    })();
    push(11, "Lipschitz suite (100 pairs)", lipschitz);

    push(12, "determinism", determinism());

    let mut all = true;
    for c in &criteria {
        println!("{}", c.line());
        all &= c.passed();
    }
    let passed = criteria.iter().filter(|c| c.passed()).count();
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn determinism() -> Outcome {
    let config = load("default.json")?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let options =
        RunOptions { seed: Some(7), threads: rayon::current_num_threads(), config_source: "default.json".into() };
    let mut bodies = Vec::new();
    for run_dir in ["first", "second"] {
        let dir = root.path().join(run_dir);
        run(Command::VerifyAll, config.clone(), &dir, &options).map_err(|e| e.to_string())?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        files.retain(|p| p.extension().is_some_and(|x| x == "csv"));
        files.sort();
        let contents = files
            .iter()
            .map(|p| Ok((p.file_name().unwrap().to_owned(), std::fs::read(p)?)))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        bodies.push(contents);
    }
    let same = bodies[0] == bodies[1] && !bodies[0].is_empty();
    let bytes: usize = bodies[0].iter().map(|(_, b)| b.len()).sum();
    Ok((
        same,
        format!("{} CSV files ({bytes} bytes) identical across two verify-all runs with seed 7", bodies[0].len()),
    ))
}
