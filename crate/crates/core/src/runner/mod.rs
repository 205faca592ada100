//! Config-driven experiment runs, their reports and plot data.

mod config;
mod presets;
mod scenarios;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, parse_config_str, BridgeSource, BridgeSpec, DeltaSpec, ExperimentConfig, LocalSpec, ManifoldSpec,
    Preset, Suite, ToyModelSpec, ToySpec,
};
pub use presets::evaluate as evaluate_preset;
pub use scenarios::{builtin_scenario, list_scenarios, BUILTIN_SCENARIOS};

use crate::bridge::{
    bridge_diagnostics, dirac_bridge, ipfp_solve, product_path, COST_AGREEMENT, ENERGY_DEVIATION_TOLERANCE,
    MASS_DRIFT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Density, GridManifold};
use crate::local::{delta_limit_bridge_vs_local, local_suite};
use crate::report::{float17, sci, CurvatureMode, InequalityReport};
use crate::toy::{
    check_toy_inequalities, lambda_curve, minimality_gap, solve_newton_bvp, FModel, NegLog, Quadratic, ZeroPotential,
    BVP_RESIDUAL_TOL, TOY_TOLERANCE,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "OTTO_LAB_OUT";
pub const DEFAULT_OUT: &str = "otto-lab-out";

/// Written next to `report.json` when a run does not exit cleanly.
pub const FAILED_MARKER: &str = "FAILED";

/// Largest allowed energy spread along a toy path.
pub const TOY_ENERGY_TOLERANCE: f64 = 1e-8;

/// Delta-limit gaps may exceed the Taylor prediction by at most this factor.
pub const TAYLOR_FACTOR: f64 = 10.0;

/// The output root: the config's `output`, else `$OTTO_LAB_OUT`, else
/// `otto-lab-out`.
pub fn out_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Loads a config from a file path, falling back to a built-in scenario id.
pub fn load_scenario(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    if path.exists() {
        return parse_config(path);
    }
    match builtin_scenario(arg) {
        Some(text) => parse_config_str(text),
        None => Err(Error::config(None, None, format!("`{arg}` is neither a file nor a built-in scenario"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    Refused,
    Error,
}

/// A numerical self-check of a run (solver residuals, conservation laws,
/// convergence rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub name: String,
    #[serde(with = "float17")]
    pub value: f64,
    #[serde(with = "float17")]
    pub tolerance: f64,
    pub pass: bool,
}

impl Consistency {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Consistency {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

/// A table for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub columns: Vec<String>,
    #[serde(with = "float17::rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(columns: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Series {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        }
    }
}

/// Everything a run produced, as written to `report.json`.
///
/// Wall-clock timings are kept in memory only so that output files are
/// byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub description: String,
    pub suite: String,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub status: RunStatus,
    pub exit_code: i32,
    pub message: Option<String>,
    pub reports: Vec<InequalityReport>,
    pub consistency: Vec<Consistency>,
    pub series: BTreeMap<String, Series>,
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig, out_dir: PathBuf) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.id.clone(),
            description: cfg.description.clone(),
            suite: cfg.suite.as_str().to_owned(),
            config: cfg.echo.clone(),
            status: RunStatus::Pass,
            exit_code: 0,
            message: None,
            reports: Vec::new(),
            consistency: Vec::new(),
            series: BTreeMap::new(),
            timings: Vec::new(),
            out_dir,
        }
    }

    /// Names of gating reports and consistency checks that failed.
    pub fn failures(&self) -> Vec<&str> {
        let reports = self.reports.iter().filter(|r| !r.gates_ok()).map(|r| r.name.as_str());
        let checks = self.consistency.iter().filter(|c| !c.pass).map(|c| c.name.as_str());
        reports.chain(checks).collect()
    }

    fn settle(&mut self) {
        let failed = self.failures();
        if !failed.is_empty() {
            self.message = Some(format!("failed: {}", failed.join(", ")));
            self.status = RunStatus::Fail;
            self.exit_code = 1;
        }
    }

    fn abort(&mut self, e: &Error) {
        self.exit_code = e.exit_code();
        self.status = if self.exit_code == 2 { RunStatus::Refused } else { RunStatus::Error };
        self.message = Some(e.to_string());
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(self.out_dir.join("report.json"), text)?;
        if self.exit_code != 0 {
            let msg = self.message.clone().unwrap_or_default();
            std::fs::write(self.out_dir.join(FAILED_MARKER), msg + "\n")?;
        }
        Ok(())
    }
}

/// Runs one experiment, writing its artifacts under `out_root/<id>/`.
///
/// Never panics on bad input: errors end up in the returned report's status,
/// message and exit code (0 pass, 1 failed check or numerical failure, 2
/// configuration or curvature refusal, 3 I/O).
pub fn run_scenario(cfg: &ExperimentConfig, out_root: &Path) -> RunReport {
    let mut report = RunReport::new(cfg, out_root.join(&cfg.id));
    let outcome = prepare_dir(&report.out_dir).and_then(|_| execute(cfg, &mut report));
    match outcome {
        Ok(()) => report.settle(),
        Err(e) => report.abort(&e),
    }
    for r in &mut report.reports {
        r.meta.scenario = Some(cfg.id.clone());
    }
    if let Err(e) = report.write() {
        report.abort(&e);
        let _ = std::fs::write(report.out_dir.join(FAILED_MARKER), format!("{e}\n"));
    }
    report
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    match std::fs::remove_file(dir.join(FAILED_MARKER)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

fn timed<T>(report: &mut RunReport, what: &str, f: impl FnOnce(&mut RunReport) -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f(report);
    let elapsed = start.elapsed();
    info!("{what}: {:.3}s", elapsed.as_secs_f64());
    report.timings.push((what.to_owned(), elapsed));
    out
}

fn execute(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let runs = |s: Suite| cfg.suite == s || cfg.suite == Suite::All;
    let manifold = match &cfg.manifold {
        Some(spec) => Some(timed(report, "build_grid", |_| build_grid(spec.kind, spec.n, spec.extent))?),
        None => None,
    };
    if let (Some(m), Some(spec)) = (&manifold, &cfg.manifold) {
        if spec.spectrum_csv {
            m.write_spectrum_csv(&report.out_dir.join("spectrum.csv"))?;
        }
    }
    let mode = cfg.mode;
    if let Some(spec) = cfg.toy.as_ref().filter(|_| runs(Suite::Toy)) {
        timed(report, "toy", |r| run_toy(cfg, spec, mode.expect("validated"), r))?;
    }
    let m = manifold.as_ref();
    if let Some(spec) = cfg.bridge.as_ref().filter(|_| runs(Suite::Bridge)) {
        timed(report, "bridge", |r| run_bridge(cfg, spec, m.expect("validated"), mode.expect("validated"), r))?;
    }
    if let Some(spec) = cfg.local.as_ref().filter(|_| runs(Suite::Local)) {
        timed(report, "local", |r| run_local(spec, m.expect("validated"), mode.expect("validated"), r))?;
    }
    if let Some(spec) = cfg.delta.as_ref().filter(|_| runs(Suite::Delta)) {
        timed(report, "delta", |r| run_delta(spec, m.expect("validated"), r))?;
    }
    Ok(())
}

fn run_toy(cfg: &ExperimentConfig, spec: &ToySpec, mode: CurvatureMode, report: &mut RunReport) -> Result<()> {
    let model: Box<dyn FModel> = match spec.model {
        ToyModelSpec::Zero { dim } => Box::new(ZeroPotential { dim }),
        ToyModelSpec::Quadratic { rho, dim } => Box::new(Quadratic { rho, dim }),
        ToyModelSpec::NegLog { n } => Box::new(NegLog { n }),
    };
    let path = solve_newton_bvp(model.as_ref(), &spec.x, &spec.y, spec.horizon, spec.m)?;
    let diag = lambda_curve(model.as_ref(), &path);
    diag.write_csv(&report.out_dir.join("toy_path.csv"))?;
    report.reports.extend(check_toy_inequalities(model.as_ref(), &path, mode)?);
    report.consistency.push(Consistency::at_most("bvp_residual", path.residual, BVP_RESIDUAL_TOL));
    report
        .consistency
        .push(Consistency::at_most("toy_energy_deviation", diag.energy_deviation, TOY_ENERGY_TOLERANCE));
    if spec.perturbations > 0 {
        let gap = minimality_gap(model.as_ref(), &path, spec.perturbations, cfg.seed)?;
        report.consistency.push(Consistency::at_most("minimality_shortfall", -gap, TOY_TOLERANCE));
    }
    let n = diag.times.len();
    report.series.insert(
        "lambda".into(),
        Series::new(
            &["t", "lambda", "phi", "lambda_prime"],
            (0..n).map(|j| vec![diag.times[j], diag.lambda[j], diag.phi[j], diag.lambda_dot[j]]).collect(),
        ),
    );
    report.series.insert(
        "energy".into(),
        Series::new(&["t", "energy"], (0..n).map(|j| vec![diag.times[j], diag.energy_samples[j]]).collect()),
    );
    Ok(())
}

fn density(m: &GridManifold, p: &Preset) -> Result<Density> {
    Density::normalized(m, evaluate_preset(p, m)?.into_vec())
}

fn run_bridge(
    cfg: &ExperimentConfig,
    spec: &BridgeSpec,
    m: &GridManifold,
    mode: CurvatureMode,
    report: &mut RunReport,
) -> Result<()> {
    m.require_mode(mode)?;
    let horizon = spec.horizon;
    let path = match &spec.source {
        BridgeSource::Marginals { mu, nu, tol, max_iter } => {
            let pots = ipfp_solve(m, horizon, &density(m, mu)?, &density(m, nu)?, *tol, *max_iter)?;
            let residual = pots.residuals[0].max(pots.residuals[1]);
            report.consistency.push(Consistency::at_most("ipfp_residual", residual, *tol));
            pots.path()?
        }
        BridgeSource::Potentials { f, g } => product_path(m, &evaluate_preset(f, m)?, &evaluate_preset(g, m)?, horizon)?,
        BridgeSource::Dirac { point, nu } => {
            let y = m.nearest_index(&vec![*point; m.dim()]);
            dirac_bridge(m, y, &density(m, nu)?, horizon)?
        }
    }
    .with_time_nodes(spec.time_nodes)?;
    let diag = bridge_diagnostics(&path, Some(mode), Some(&cfg.id))?;
    diag.write_json(&report.out_dir.join("bridge.json"))?;
    diag.write_samples_csv(&report.out_dir.join("bridge_samples.csv"))?;
    let drift = diag.samples.iter().fold(0.0f64, |a, s| a.max((s.mass - 1.0).abs()));
    report.consistency.extend([
        Consistency::at_most("cost_identity_gap", diag.cost.relative_gap(), COST_AGREEMENT),
        Consistency::at_most("energy_deviation", diag.energy.deviation, ENERGY_DEVIATION_TOLERANCE),
        Consistency::at_most("mass_drift", drift, MASS_DRIFT_TOLERANCE),
    ]);
    report.series.insert(
        "bridge_samples".into(),
        Series::new(
            &["t", "mass", "velocity_cost", "energy_sample"],
            diag.samples.iter().map(|s| vec![s.t, s.mass, s.velocity_cost, s.energy_sample]).collect(),
        ),
    );
    report.reports.extend(diag.reports);
    Ok(())
}

fn run_local(spec: &LocalSpec, m: &GridManifold, mode: CurvatureMode, report: &mut RunReport) -> Result<()> {
    let g = evaluate_preset(&spec.g, m)?;
    let profiles = local_suite(m, mode, &g, spec.horizon)?;
    std::fs::write(report.out_dir.join("local.json"), serde_json::to_string_pretty(&profiles)? + "\n")?;
    for p in &profiles {
        report.reports.push(p.worst()?);
        let slack = p.slack();
        let rows = (0..p.points.len())
            .map(|k| vec![p.points[k] as f64, m.point(p.points[k])[0], p.lhs[k], p.rhs[k], slack[k]])
            .collect();
        report
            .series
            .insert(format!("slack_{}", p.name), Series::new(&["point", "x", "lhs", "rhs", "slack"], rows));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn run_delta(spec: &DeltaSpec, m: &GridManifold, report: &mut RunReport) -> Result<()> {
    let g = evaluate_preset(&spec.g, m)?;
    let y = m.nearest_index(&vec![spec.point; m.dim()]);
    let mut records = Vec::new();
    for &pair in &spec.pairs {
        let rec = delta_limit_bridge_vs_local(m, pair, spec.rho, &g, y, spec.horizon, &spec.widths)?;
        rec.write_csv(&report.out_dir.join(format!("delta_{pair}.csv")))?;
        let shrink = [&rec.gap_lhs, &rec.gap_rhs]
            .iter()
            .flat_map(|gaps| gaps.windows(2).map(|w| ratio(w[1], w[0])))
            .fold(0.0f64, f64::max);
        let mut monotone = Consistency::at_most(format!("delta_gap_ratio_{pair}"), shrink, 1.0);
        monotone.pass = rec.monotone();
        let k = rec.widths.len() - 1;
        let taylor = ratio(rec.gap_lhs[k], rec.taylor_lhs[k]).max(ratio(rec.gap_rhs[k], rec.taylor_rhs[k]));
        let mut near = Consistency::at_most(format!("delta_taylor_ratio_{pair}"), taylor, TAYLOR_FACTOR);
        near.pass = rec.within_taylor(TAYLOR_FACTOR);
        report.consistency.extend([monotone, near]);
        report.series.insert(
            format!("delta_{pair}"),
            Series::new(
                &["width", "bridge_lhs", "bridge_rhs", "local_lhs", "local_rhs", "gap_lhs", "gap_rhs"],
                rec.rows(),
            ),
        );
        records.push(rec);
    }
    std::fs::write(report.out_dir.join("delta.json"), serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(())
}

/// Writes one series of a saved report as a whitespace-separated `.dat` file
/// next to it and returns the file's path.
pub fn emit_plot_data(report_path: &Path, series: &str) -> Result<PathBuf> {
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(report_path)?)?;
    let s = report
        .series
        .get(series)
        .ok_or_else(|| Error::MissingSeries(format!("{series} (available: {})", available(&report))))?;
    let mut text = format!("# {}\n", s.columns.join(" "));
    for row in &s.rows {
        text.push_str(&row.iter().map(|&v| sci(v)).collect::<Vec<_>>().join(" "));
        text.push('\n');
    }
    let out = report_path.with_file_name(format!("{series}.dat"));
    std::fs::write(&out, text)?;
    Ok(out)
}

fn available(report: &RunReport) -> String {
    report.series.keys().map(String::as_str).collect::<Vec<_>>().join(", ")
}
