//! End-to-end runs: oracle, solver or both, followed by property checks and
//! metrics, plus seed sweeps and baseline comparisons built on top of them.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::metrics::{
    baseline_overprovision, compare_premium, compute_metrics, running_max_premium_fraction,
    series_rows, summarize, write_series_csv, BaselineError, ComparisonRow, MetricsBundle,
};
use crate::model::{ConfigError, NetworkConfig, ThroughputParams};
use crate::oracle::{simulate, SimError};
use crate::properties::{check_all, PropertyReport};
use crate::ratio::Ratio;
use crate::scenario::{gen_from_profile, ScenarioError, ScenarioTrace};
use crate::smt::{
    emit_smtlib, encode, extract_trace, solve, EncodeError, ExtractError, SolverCommand,
    SolverError, Status,
};
use crate::trace::{diff_traces, AllocationTrace, TraceDifference, TraceIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Smt,
    Differential,
}

impl Mode {
    pub fn needs_solver(self) -> bool {
        self != Mode::Oracle
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Oracle => "oracle",
            Mode::Smt => "smt",
            Mode::Differential => "differential",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "smt" => Ok(Mode::Smt),
            "differential" => Ok(Mode::Differential),
            other => Err(format!("unknown mode {other:?} (oracle, smt, differential)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub solver: SolverCommand,
    pub timeout: Duration,
    pub params: ThroughputParams,
}

impl RunOptions {
    pub fn new(mode: Mode, solver: SolverCommand, timeout: Duration) -> Self {
        Self {
            mode,
            solver,
            timeout,
            params: ThroughputParams::default(),
        }
    }
}

/// What the solver leg did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub solver: String,
    pub status: Status,
    pub wall_time: f64,
    pub encode_time: f64,
    pub declarations: usize,
    pub assertion_count: usize,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("solver answered {} after {:.2}s", serde_json::to_string(&.0.status).unwrap_or_default(), .0.wall_time)]
    Verdict(Box<SolveSummary>),
    #[error("cannot decode model: {0}")]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] io::Error),
    #[error("cannot write artifacts: {0}")]
    Artifact(#[from] TraceIoError),
}

/// Coarse failure class, used for exit codes and sweep rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Validation,
    Solver,
    Other,
}

impl RunError {
    pub fn failure(&self) -> Failure {
        match self {
            RunError::Config(_)
            | RunError::Scenario(_)
            | RunError::Encode(_)
            | RunError::Baseline(BaselineError::TooSmall { .. } | BaselineError::TooLarge { .. }) => {
                Failure::Validation
            }
            RunError::Solver(_) | RunError::Verdict(_) | RunError::Extract(_) => Failure::Solver,
            _ => Failure::Other,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub oracle: Option<AllocationTrace>,
    pub smt: Option<AllocationTrace>,
    pub solve: Option<SolveSummary>,
    /// Oracle against solver trace; always empty outside differential mode.
    pub diff: Vec<TraceDifference>,
    pub report: PropertyReport,
    pub metrics: MetricsBundle,
}

impl RunOutcome {
    /// The solver trace when there is one, else the oracle trace.
    pub fn trace(&self) -> &AllocationTrace {
        self.smt
            .as_ref()
            .or(self.oracle.as_ref())
            .expect("a run produces at least one trace")
    }
}

/// Encodes, solves and decodes one scenario.
pub fn solve_case(
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    solver: &SolverCommand,
    timeout: Duration,
) -> Result<(AllocationTrace, SolveSummary), RunError> {
    let start = Instant::now();
    let cs = encode(config, scenario)?;
    let script = emit_smtlib(&cs);
    let encode_time = start.elapsed().as_secs_f64();
    let verdict = solve(solver, &script, timeout)?;
    let summary = SolveSummary {
        solver: solver.display(),
        status: verdict.status,
        wall_time: verdict.wall_time,
        encode_time,
        declarations: cs.declarations.len(),
        assertion_count: cs.assertion_count(),
    };
    if verdict.status != Status::Sat {
        return Err(RunError::Verdict(Box::new(summary)));
    }
    Ok((extract_trace(&verdict, config, scenario)?, summary))
}

/// Runs one configured scenario in the requested mode.
pub fn run_case(
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    scenario.check_shape(config)?;

    let oracle = match opts.mode {
        Mode::Oracle | Mode::Differential => Some(simulate(config, scenario)?),
        Mode::Smt => None,
    };
    let (smt, solve) = if opts.mode.needs_solver() {
        let (trace, summary) = solve_case(config, scenario, &opts.solver, opts.timeout)?;
        (Some(trace), Some(summary))
    } else {
        (None, None)
    };
    let diff = match (&oracle, &smt) {
        (Some(a), Some(b)) => diff_traces(a, b),
        _ => Vec::new(),
    };
    let primary = smt.as_ref().or(oracle.as_ref()).expect("one leg ran");
    let report = check_all(primary, config);
    let metrics = compute_metrics(primary, config, Some(scenario), &opts.params);
    Ok(RunOutcome {
        oracle,
        smt,
        solve,
        diff,
        report,
        metrics,
    })
}

/// Top-level status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    PropertyFailure,
    Mismatch,
}

impl RunOutcome {
    pub fn status(&self) -> RunStatus {
        if !self.diff.is_empty() {
            RunStatus::Mismatch
        } else if !self.report.all_passed() {
            RunStatus::PropertyFailure
        } else {
            RunStatus::Ok
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: String,
    pub seed: u64,
    pub mode: Mode,
    pub total_prbs: u32,
    pub horizon: u32,
    pub timestep_minutes: String,
    pub status: RunStatus,
    pub properties_passed: bool,
    pub diff_count: usize,
    pub solve: Option<SolveSummary>,
    pub final_residual_fraction: f64,
}

fn write_trace(dir: &Path, stem: &str, trace: &AllocationTrace, config: &NetworkConfig) -> Result<(), RunError> {
    fs::write(dir.join(format!("{stem}.json")), trace.to_json())?;
    trace.write_csv(config, fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    Ok(())
}

/// Writes every artifact of `outcome` into `dir`, creating it if needed.
pub fn write_artifacts(
    dir: &Path,
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    mode: Mode,
    outcome: &RunOutcome,
) -> Result<RunSummary, RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), config.to_json())?;
    fs::write(dir.join("scenario.json"), scenario.to_json())?;
    if let Some(t) = &outcome.oracle {
        write_trace(dir, "trace_oracle", t, config)?;
    }
    if let Some(t) = &outcome.smt {
        write_trace(dir, "trace_smt", t, config)?;
    }
    fs::write(dir.join("metrics.json"), outcome.metrics.to_json())?;
    write_series_csv(
        &series_rows(&outcome.metrics, outcome.trace(), config),
        fs::File::create(dir.join("series.csv"))?,
    )?;
    fs::write(dir.join("properties.json"), outcome.report.to_json())?;
    outcome
        .report
        .write_csv(fs::File::create(dir.join("properties.csv"))?)?;
    if mode == Mode::Differential {
        let text = serde_json::to_string_pretty(&outcome.diff).expect("diff serializes");
        fs::write(dir.join("diff.json"), text)?;
    }
    let summary = RunSummary {
        config: config.name.clone(),
        seed: scenario.seed,
        mode,
        total_prbs: config.total_prbs,
        horizon: config.horizon,
        timestep_minutes: config.timestep_minutes.to_string(),
        status: outcome.status(),
        properties_passed: outcome.report.all_passed(),
        diff_count: outcome.diff.len(),
        solve: outcome.solve.clone(),
        final_residual_fraction: outcome.metrics.final_residual_fraction(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(dir.join("summary.json"), text)?;
    Ok(summary)
}

/// One job of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub config: NetworkConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepPlan {
    pub cells: Vec<SweepCell>,
    /// One line per skipped `(config, T_P)` pair.
    pub skipped: Vec<String>,
}

/// Expands configs x budgets x seeds, dropping pairs that fail validation.
pub fn plan_sweep(
    configs: &[NetworkConfig],
    total_prbs: &[u32],
    seeds: &[u64],
    horizon: Option<u32>,
) -> SweepPlan {
    let mut plan = SweepPlan::default();
    for base in configs {
        for &tp in total_prbs {
            let config = base.with_overrides(Some(tp), horizon);
            if let Err(e) = config.validate() {
                plan.skipped.push(format!("{} T_P={tp}: {e}", base.name));
                continue;
            }
            for &seed in seeds {
                plan.cells.push(SweepCell {
                    config: config.clone(),
                    seed,
                });
            }
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: String,
    pub total_prbs: u32,
    pub horizon: u32,
    pub seed: u64,
    /// `ok`, `property_failure`, `mismatch`, `validation`, `solver` or `other`.
    pub status: String,
    pub final_residual_share: Option<i64>,
    pub final_residual_fraction: Option<f64>,
    pub topups: Option<u64>,
    pub rampdowns: Option<u64>,
    pub blocked_entries: Option<u64>,
    pub solver_wall_s: Option<f64>,
    pub assertion_count: Option<usize>,
    pub premium_pct_mean: Option<f64>,
    pub premium_pct_min: Option<f64>,
    pub premium_pct_max: Option<f64>,
    pub diff_count: Option<usize>,
    pub error: Option<String>,
}

fn status_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn cell_dir_name(cell: &SweepCell) -> String {
    format!("{}_tp{}_t{}_s{}", cell.config.name, cell.config.total_prbs, cell.config.horizon, cell.seed)
}

/// Runs one sweep cell; failures become the row's status instead of an error.
pub fn run_cell(cell: &SweepCell, opts: &RunOptions, out: Option<&Path>) -> SweepRow {
    let mut row = SweepRow {
        config: cell.config.name.clone(),
        total_prbs: cell.config.total_prbs,
        horizon: cell.config.horizon,
        seed: cell.seed,
        status: String::new(),
        final_residual_share: None,
        final_residual_fraction: None,
        topups: None,
        rampdowns: None,
        blocked_entries: None,
        solver_wall_s: None,
        assertion_count: None,
        premium_pct_mean: None,
        premium_pct_min: None,
        premium_pct_max: None,
        diff_count: None,
        error: None,
    };
    let result = gen_from_profile(&cell.config, cell.seed)
        .map_err(RunError::from)
        .and_then(|scenario| {
            let outcome = run_case(&cell.config, &scenario, opts)?;
            if let Some(dir) = out {
                write_artifacts(&dir.join(cell_dir_name(cell)), &cell.config, &scenario, opts.mode, &outcome)?;
            }
            Ok(outcome)
        });
    match result {
        Ok(o) => {
            let m = &o.metrics;
            row.status = status_name(&o.status());
            row.final_residual_share = m.residual_share.last().copied();
            row.final_residual_fraction = Some(m.final_residual_fraction());
            row.topups = Some(m.topup_total);
            row.rampdowns = Some(m.rampdown_total);
            row.blocked_entries = Some(m.blocked_entries);
            row.solver_wall_s = o.solve.as_ref().map(|s| s.wall_time);
            row.assertion_count = o.solve.as_ref().map(|s| s.assertion_count);
            if let Some((mean, min, max)) = summarize(&m.premium_share_pct) {
                row.premium_pct_mean = Some(mean);
                row.premium_pct_min = Some(min);
                row.premium_pct_max = Some(max);
            }
            row.diff_count = (opts.mode == Mode::Differential).then_some(o.diff.len());
            if let Some(first) = o.report.failures().next() {
                row.error = Some(format!("{} fails at j={:?}", first.name, first.first_violation_timestep));
            } else if let Some(d) = o.diff.first() {
                row.error = Some(d.to_string());
            }
        }
        Err(e) => {
            row.status = status_name(&e.failure());
            if let RunError::Verdict(s) = &e {
                row.solver_wall_s = Some(s.wall_time);
                row.assertion_count = Some(s.assertion_count);
            }
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every cell of `plan` with up to `jobs` in flight. Rows keep plan order.
pub fn run_sweep(plan: &SweepPlan, opts: &RunOptions, jobs: Option<usize>, out: Option<&Path>) -> Vec<SweepRow> {
    batch::with_jobs(jobs, || batch::par_map(&plan.cells, |cell| run_cell(cell, opts, out)))
}

pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], out: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: io::Read>(input: R) -> Result<Vec<SweepRow>, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Premium-share comparison of the allocator against the static baseline.
#[derive(Debug, Clone)]
pub struct Comparison {
    /// Premium fraction handed to the baseline.
    pub fraction: Ratio,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn min_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_gap(&self) -> f64 {
        summarize(&self.rows.iter().map(|r| r.gap).collect::<Vec<_>>()).map_or(f64::NAN, |s| s.0)
    }
}

/// Compares against a baseline holding `fraction` of `T_P` for premium
/// slices, defaulting to the allocator's own running maximum.
pub fn compare_case(
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    fraction: Option<Ratio>,
    params: &ThroughputParams,
) -> Result<Comparison, RunError> {
    config.validate()?;
    let trace = simulate(config, scenario)?;
    let fraction = fraction.unwrap_or_else(|| running_max_premium_fraction(&trace, config));
    let baseline = baseline_overprovision(config, scenario, fraction)?;
    let rows = compare_premium(
        &compute_metrics(&trace, config, Some(scenario), params),
        &compute_metrics(&baseline, config, Some(scenario), params),
    );
    Ok(Comparison { fraction, rows })
}
