//! `slicealloc` command-line harness.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | any other error (I/O, internal) |
//! | 2 | usage error |
//! | 3 | config or scenario failed validation |
//! | 4 | a property check failed |
//! | 5 | solver failure: spawn error, unsat, unknown or timeout |
//! | 6 | oracle and solver traces differ |

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use slicealloc_core::metrics::{ratio_to_f64, write_comparison_csv};
use slicealloc_core::model::{constraint_count_bound, NetworkConfig, ThroughputParams};
use slicealloc_core::pipeline::{
    compare_case, plan_sweep, run_case, run_sweep, write_artifacts, write_sweep_csv, Failure,
    Mode, RunError, RunOptions, RunStatus,
};
use slicealloc_core::presets;
use slicealloc_core::ratio;
use slicealloc_core::scenario::{gen_from_profile, ScenarioTrace};
use slicealloc_core::smt::{SolverCommand, SOLVER_ENV};

const EXIT_OTHER: u8 = 1;
const EXIT_VALIDATION: u8 = 3;
const EXIT_PROPERTY: u8 = 4;
const EXIT_SOLVER: u8 = 5;
const EXIT_MISMATCH: u8 = 6;

#[derive(Parser)]
#[command(name = "slicealloc", version, about = "Layered PRB allocation: oracle, SMT encoding and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace, metrics and property report.
    Run(RunArgs),
    /// Run a config x T_P x seed matrix and write one CSV row per cell.
    Sweep(SweepArgs),
    /// Premium PRB share of the allocator against a static over-provisioner.
    Compare(CompareArgs),
    /// Generate a scenario from the config's arrival profile.
    GenScenario(GenArgs),
    /// Check a config and print its derived quantities.
    ValidateConfig(ConfigArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config JSON file, or a preset name (3-2-4, 3-3-7, 5-3-10, 5-4-13).
    #[arg(long)]
    config: String,
    /// Override the total PRB budget.
    #[arg(long)]
    total_prbs: Option<u32>,
    /// Override the horizon T.
    #[arg(long)]
    horizon: Option<u32>,
}

#[derive(Args, Clone)]
#[group(required = false, multiple = false)]
struct ScenarioArgs {
    /// Pinned scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Generate the scenario from this seed (default 1).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Solver command; `{file}` is replaced by a script path, otherwise the
    /// script goes to stdin. Falls back to $SLICEALLOC_SOLVER, then z3.
    #[arg(long)]
    solver_cmd: Option<String>,
    /// Solver timeout in seconds.
    #[arg(long, default_value_t = 300)]
    timeout: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "oracle")]
    mode: Mode,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Config files or preset names; all presets when omitted.
    #[arg(long = "config")]
    configs: Vec<String>,
    /// Seeds as `a-b` ranges and/or comma-separated values.
    #[arg(long, default_value = "1-30")]
    seeds: String,
    /// Comma-separated PRB budgets.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300")]
    total_prbs: Vec<u32>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long, default_value = "oracle")]
    mode: Mode,
    #[command(flatten)]
    solver: SolverArgs,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; `sweep.csv` and one subdirectory per cell go here.
    /// Without it the CSV is printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Premium share given to the baseline, e.g. `2/5`. Defaults to the
    /// allocator's running maximum.
    #[arg(long)]
    fraction: Option<String>,
    /// Output CSV path; printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output JSON path; printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the exit code it should produce.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(EXIT_OTHER, e.into())
    }
}

fn validation(e: impl Into<anyhow::Error>) -> Exit {
    Exit(EXIT_VALIDATION, e.into())
}

fn run_error(e: RunError) -> Exit {
    let code = match e.failure() {
        Failure::Validation => EXIT_VALIDATION,
        Failure::Solver => EXIT_SOLVER,
        Failure::Other => EXIT_OTHER,
    };
    Exit(code, e.into())
}

fn load_config(args: &ConfigArgs) -> Result<NetworkConfig, Exit> {
    let path = Path::new(&args.config);
    let base = if path.exists() {
        NetworkConfig::from_path(path).with_context(|| format!("loading {}", path.display()))
    } else if presets::source(&args.config).is_some() {
        presets::load(&args.config).map_err(anyhow::Error::from)
    } else {
        Err(anyhow::anyhow!(
            "{} is neither a file nor a preset ({})",
            args.config,
            presets::NAMES.join(", ")
        ))
    }
    .map_err(validation)?;
    let config = base.with_overrides(args.total_prbs, args.horizon);
    config.validate().map_err(validation)?;
    Ok(config)
}

fn load_scenario(config: &NetworkConfig, args: &ScenarioArgs) -> Result<ScenarioTrace, Exit> {
    let scenario = match &args.scenario {
        Some(path) => ScenarioTrace::from_path(path),
        None => gen_from_profile(config, args.seed.unwrap_or(1)),
    }
    .map_err(validation)?;
    scenario.check_shape(config).map_err(validation)?;
    Ok(scenario)
}

fn solver_options(mode: Mode, args: &SolverArgs) -> Result<RunOptions, Exit> {
    let solver = SolverCommand::resolve(args.solver_cmd.as_deref()).map_err(validation)?;
    Ok(RunOptions::new(mode, solver, Duration::from_secs(args.timeout)))
}

fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range {part}");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse()?),
        }
    }
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Exit> {
    let config = load_config(&args.config)?;
    let scenario = load_scenario(&config, &args.scenario)?;
    let opts = solver_options(args.mode, &args.solver)?;
    let outcome = run_case(&config, &scenario, &opts).map_err(run_error)?;
    if let Some(dir) = &args.out {
        let summary = write_artifacts(dir, &config, &scenario, args.mode, &outcome).map_err(run_error)?;
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    if let Some(s) = &outcome.solve {
        eprintln!(
            "solver {}: {} assertions, {:.3}s",
            s.solver, s.assertion_count, s.wall_time
        );
    }
    eprintln!(
        "final residual fraction {:.3}, {} top-ups, {} ramp-downs",
        outcome.metrics.final_residual_fraction(),
        outcome.metrics.topup_total,
        outcome.metrics.rampdown_total
    );
    match outcome.status() {
        RunStatus::Ok => Ok(()),
        RunStatus::Mismatch => {
            for d in outcome.diff.iter().take(10) {
                eprintln!("  {d}");
            }
            Err(Exit(
                EXIT_MISMATCH,
                anyhow::anyhow!("{} cells differ between oracle and solver", outcome.diff.len()),
            ))
        }
        RunStatus::PropertyFailure => {
            for r in outcome.report.failures() {
                eprintln!(
                    "  {} first fails at j={:?}: {}",
                    r.name,
                    r.first_violation_timestep,
                    r.details.as_deref().unwrap_or("")
                );
            }
            Err(Exit(EXIT_PROPERTY, anyhow::anyhow!("property check failed")))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Exit> {
    let configs = if args.configs.is_empty() {
        presets::all()
    } else {
        args.configs
            .iter()
            .map(|c| {
                load_config(&ConfigArgs {
                    config: c.clone(),
                    total_prbs: None,
                    horizon: None,
                })
            })
            .collect::<Result<_, _>>()?
    };
    let seeds = parse_seeds(&args.seeds).map_err(|e| Exit(2, e))?;
    let opts = solver_options(args.mode, &args.solver)?;
    let plan = plan_sweep(&configs, &args.total_prbs, &seeds, args.horizon);
    for note in &plan.skipped {
        eprintln!("skipped {note}");
    }
    let cells_dir = args.out.as_ref().map(|d| d.join("cells"));
    let rows = run_sweep(&plan, &opts, args.jobs, cells_dir.as_deref());

    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("sweep.csv"), &csv)?;
            fs::write(dir.join("skipped.txt"), plan.skipped.join("\n"))?;
        }
        None => io::stdout().write_all(&csv)?,
    }
    let failed: Vec<_> = rows.iter().filter(|r| r.status != "ok").collect();
    eprintln!("{} rows, {} not ok", rows.len(), failed.len());
    let Some(first) = failed.first() else {
        return Ok(());
    };
    let code = match first.status.as_str() {
        "validation" => EXIT_VALIDATION,
        "property_failure" => EXIT_PROPERTY,
        "solver" => EXIT_SOLVER,
        "mismatch" => EXIT_MISMATCH,
        _ => EXIT_OTHER,
    };
    Err(Exit(
        code,
        anyhow::anyhow!(
            "{} seed {}: {}",
            first.config,
            first.seed,
            first.error.as_deref().unwrap_or(&first.status)
        ),
    ))
}

fn cmd_compare(args: CompareArgs) -> Result<(), Exit> {
    let config = load_config(&args.config)?;
    let scenario = load_scenario(&config, &args.scenario)?;
    let fraction = args
        .fraction
        .as_deref()
        .map(ratio::parse)
        .transpose()
        .map_err(|e| Exit(2, anyhow::anyhow!(e)))?;
    let cmp = compare_case(&config, &scenario, fraction, &ThroughputParams::default()).map_err(run_error)?;
    let mut csv = Vec::new();
    write_comparison_csv(&cmp.rows, &mut csv)?;
    emit(args.out.as_deref(), &String::from_utf8(csv)?)?;
    eprintln!(
        "baseline premium fraction {} ({:.3}); gap min {:.2} mean {:.2} percentage points",
        cmp.fraction,
        ratio_to_f64(&cmp.fraction),
        cmp.min_gap(),
        cmp.mean_gap()
    );
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), Exit> {
    let config = load_config(&args.config)?;
    let scenario = gen_from_profile(&config, args.seed).map_err(validation)?;
    emit(args.out.as_deref(), &(scenario.to_json() + "\n"))?;
    Ok(())
}

fn cmd_validate(args: ConfigArgs) -> Result<(), Exit> {
    let config = load_config(&args)?;
    let (s, k, n) = config.shape();
    println!("{}: (S,K,N)=({s},{k},{n}) T_P={} T={}", config.name, config.total_prbs, config.horizon);
    println!(
        "sum of window shares {} + residual floor {} <= {}",
        config.total_w_hat(),
        config.residual_floor(),
        config.total_prbs
    );
    for (i, slice) in config.slices.iter().enumerate() {
        println!(
            "slice {} service {} partition {}: t_win={} m={} w_hat={}",
            slice.slice_id,
            slice.service_id,
            slice.partition_id,
            slice.t_win,
            slice.m,
            config.w_hat(i)
        );
    }
    match constraint_count_bound(&config) {
        Ok(b) => println!("constraint count bound {b}"),
        Err(e) => println!("constraint count bound unavailable: {e}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::GenScenario(a) => cmd_gen(a),
        Command::ValidateConfig(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            if code == EXIT_SOLVER {
                eprintln!("hint: pick a solver with --solver-cmd or ${SOLVER_ENV}");
            }
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_config_is_a_validation_error() {
        let err = load_config(&ConfigArgs {
            config: "no-such-preset".into(),
            total_prbs: None,
            horizon: None,
        })
        .err()
        .unwrap();
        assert_eq!(err.0, EXIT_VALIDATION);
    }
}
