//! Subcommand dispatch and artifact writing.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::check::{all_passed, Check};
use crate::config::ExperimentConfig;
use crate::output::{float, OutputDir};
use crate::stages::{
    cell_stage, cell_table, constants_stage, effective_stage, rates_stage, suite_stage, threshold_stage, Experiment,
    RATE_COLUMNS, THRESHOLD_COLUMNS,
};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Constants,
    Cell,
    Effective,
    Threshold,
    Rates,
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Cell => "cell",
            Command::Effective => "effective",
            Command::Threshold => "threshold",
            Command::Rates => "rates",
            Command::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: usize,
    /// Name of the config file, recorded in the metadata.
    pub config_source: String,
}

/// Checks produced by a run, plus whatever the command prints on stdout.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub checks: Vec<Check>,
    pub stdout: String,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a str,
    seed: u64,
    threads: usize,
    unix_time: u64,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Verdict<'a> {
    pass: bool,
    failing: Vec<&'a str>,
    checks: &'a [Check],
}

fn write_cell(exp: &Experiment, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let outcome = cell_stage(exp)?;
    let (header, rows) = cell_table(exp);
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|x| float(*x)).collect()).collect();
    out.csv("cell.csv", &header, &rows)?;
    out.json("cell.json", &outcome)?;
    Ok(outcome.checks)
}

fn write_threshold(exp: &Experiment, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let outcome = threshold_stage(exp)?;
    let d = exp.grid.dim();
    let mut header: Vec<String> = vec![THRESHOLD_COLUMNS[0].to_string()];
    header.extend((1..=d).map(|j| format!("xi{j}")));
    header.extend(THRESHOLD_COLUMNS[1..].iter().map(|s| s.to_string()));
    let mut rows = Vec::new();
    for (di, report) in outcome.reports.iter().enumerate() {
        for r in &report.rows {
            let mut row = vec![di.to_string()];
            row.extend(r.xi.iter().map(|x| float(*x)));
            row.extend(
                [
                    r.xi_norm,
                    r.f_minus_p,
                    r.f_minus_p_minus_f1,
                    r.af_minus_g2,
                    r.af_minus_g2_minus_g3,
                    r.pg3p,
                    r.g3_norm,
                    r.eigenvalue,
                ]
                .iter()
                .map(|x| float(*x)),
            );
            row.push(r.contour_points.to_string());
            row.push(float(r.idempotency_defect));
            rows.push(row);
        }
    }
    out.csv("threshold.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        directions: &'a [Vec<f64>],
        d0: f64,
        measured_gap: f64,
        slopes: Vec<&'a nonloc_homog::threshold::ThresholdSlopes>,
        margins: Vec<&'a Option<nonloc_homog::threshold::BoundMargins>>,
        first_order: Vec<&'a nonloc_homog::threshold::FirstOrderFit>,
        projections: &'a [crate::stages::ProjectionSample],
        route_defect: f64,
        g3_ratio: f64,
        checks: &'a [Check],
    }
    let first = &outcome.reports[0];
    out.json(
        "threshold.json",
        &Summary {
            directions: &outcome.directions,
            d0: first.d0,
            measured_gap: first.measured_gap,
            slopes: outcome.reports.iter().map(|r| &r.slopes).collect(),
            margins: outcome.reports.iter().map(|r| &r.margins).collect(),
            first_order: outcome.reports.iter().map(|r| &r.first_order).collect(),
            projections: &outcome.projections,
            route_defect: outcome.route_defect,
            g3_ratio: outcome.g3_ratio,
            checks: &outcome.checks,
        },
    )?;
    Ok(outcome.checks)
}

fn write_rates(exp: &Experiment, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let outcome = rates_stage(exp)?;
    let header: Vec<String> = RATE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = outcome
        .rates
        .rows
        .iter()
        .map(|r| {
            [
                r.epsilon,
                r.fiber_sup_plain,
                r.fiber_sup_corrected,
                r.ws_plain,
                r.ws_corrected,
                r.bound_plain,
                r.bound_corrected,
                r.slack,
            ]
            .iter()
            .map(|x| float(*x))
            .collect()
        })
        .collect();
    out.csv("rates.csv", &header, &rows)?;
    let fb_header: Vec<String> = ["xi_norm", "epsilon", "plain", "bound_plain", "corrected", "bound_corrected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let fb_rows: Vec<Vec<String>> = outcome
        .fiber_bounds
        .rows
        .iter()
        .map(|r| {
            [r.xi_norm, r.epsilon, r.plain, r.bound_plain, r.corrected, r.bound_corrected]
                .iter()
                .map(|x| float(*x))
                .collect()
        })
        .collect();
    out.csv("fiber_bounds.csv", &fb_header, &fb_rows)?;
    out.json("rates.json", &outcome)?;
    Ok(outcome.checks)
}

/// Runs one subcommand, writing its artifacts under `out_dir`.
pub fn run(
    command: Command,
    config: ExperimentConfig,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<RunSummary, CliError> {
    let exp = Experiment::prepare(config, options.seed)?;
    let mut out = OutputDir::create(out_dir)?;
    let mut checks = Vec::new();
    let mut stdout = String::new();
    match command {
        Command::Constants => {
            let outcome = constants_stage(&exp);
            out.json("constants.json", &outcome.table)?;
            stdout = serde_json::to_string_pretty(&outcome.table).expect("serializes");
            checks = outcome.checks;
        }
        Command::Cell => checks = write_cell(&exp, &mut out)?,
        Command::Effective => {
            let outcome = effective_stage(&exp);
            out.json("effective.json", &outcome)?;
            stdout = serde_json::to_string_pretty(&serde_json::json!({
                "g0": outcome.g0,
                "min_eigenvalue": outcome.min_eigenvalue,
                "floor": outcome.floor,
            }))
            .expect("serializes");
            checks = outcome.checks;
        }
        Command::Threshold => checks = write_threshold(&exp, &mut out)?,
        Command::Rates => checks = write_rates(&exp, &mut out)?,
        Command::VerifyAll => {
            let constants = constants_stage(&exp);
            out.json("constants.json", &constants.table)?;
            checks.extend(constants.checks);
            let effective = effective_stage(&exp);
            out.json("effective.json", &effective)?;
            checks.extend(effective.checks);
            checks.extend(write_cell(&exp, &mut out)?);
            checks.extend(write_threshold(&exp, &mut out)?);
            checks.extend(write_rates(&exp, &mut out)?);
            let suites = suite_stage(&exp)?;
            out.json("suites.json", &suites)?;
            checks.extend(suites.checks);
            let failing = crate::check::failing_names(&checks);
            out.json("verify.json", &Verdict { pass: failing.is_empty(), failing, checks: &checks })?;
        }
    }
    if stdout.is_empty() {
        stdout = checks.iter().map(Check::line).collect::<Vec<_>>().join("\n");
    }
    let metadata = Metadata {
        command: command.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config: &options.config_source,
        seed: exp.seed,
        threads: options.threads,
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        artifacts: out
            .written()
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    out.json("metadata.json", &metadata)?;
    Ok(RunSummary { checks, stdout })
}
