//! `evasion`: run the split 14-bus ADMM study under attack and export the
//! traces and plot data.

mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evasion_core::admm::AdmmConfig;
use evasion_core::monitors::DetectorConfig;
use evasion_core::network::{parse_matpower_case, study_case, NetworkCase, STUDY_VMAX, STUDY_VMIN};
use evasion_core::scenario::{
    builtin_catalog, export, load_summary, mean_std, parse_scenarios, reference_replay, ExportOptions, ScenarioError,
    ScenarioResult, ScenarioSpec, Study, Summary,
};

/// Exit code for invalid input (bad flags, specs or files).
const EXIT_INVALID: u8 = 2;
/// Exit code for solver or I/O failures.
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "evasion", version, about = "Residual-evasive attacks on consensus ADMM optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios (and any from a config file).
    Catalog {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the specs as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run scenarios and write traces, summary.json and plot data.
    Run(RunArgs),
    /// Run a fast subset of the property checks.
    Verify,
    /// Summarize an export directory.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario id to run; repeatable.
    #[arg(long = "scenario", value_name = "N", required_unless_present = "all", conflicts_with = "all")]
    scenarios: Vec<u32>,
    /// Run every built-in scenario plus those in --config.
    #[arg(long)]
    all: bool,
    /// JSON array of user scenario specs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// MATPOWER case file; defaults to the embedded IEEE 14-bus case.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Base seed override for every selected scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
    /// Primal and dual residual tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Replace generated attacks with the reference vectors where available.
    #[arg(long)]
    replay: bool,
    /// Record wall times in the exports (makes them run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let invalid = error.chain().any(|e| {
            matches!(e.downcast_ref::<ScenarioError>(), Some(ScenarioError::Validation { .. } | ScenarioError::Json { .. }))
                || e.downcast_ref::<evasion_core::network::NetworkError>().is_some()
                || e.downcast_ref::<serde_json::Error>().is_some()
        });
        Failure { code: if invalid { EXIT_INVALID } else { EXIT_FAILURE }, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Catalog { config, json } => catalog(config.as_deref(), json).map_err(Failure::from),
        Command::Run(args) => run(&args).map_err(Failure::from),
        Command::Verify => verify::run().map_err(|e| Failure { code: EXIT_FAILURE, error: e }),
        Command::Report { input } => report(&input).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn user_specs(path: Option<&Path>) -> Result<Vec<ScenarioSpec>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenarios(&text).with_context(|| format!("parsing scenarios in {}", path.display()))
}

/// Built-in specs overlaid by user specs with the same id.
fn all_specs(config: Option<&Path>) -> Result<BTreeMap<u32, ScenarioSpec>> {
    let mut specs: BTreeMap<u32, ScenarioSpec> = builtin_catalog().into_iter().map(|s| (s.id, s)).collect();
    for s in user_specs(config)? {
        specs.insert(s.id, s);
    }
    Ok(specs)
}

fn catalog(config: Option<&Path>, json: bool) -> Result<()> {
    let specs: Vec<ScenarioSpec> = all_specs(config)?.into_values().collect();
    if json {
        println!("{}", serde_json::to_string_pretty(&specs)?);
        return Ok(());
    }
    println!("{:>4}  {:<14} {:>6}  label", "id", "family", "trials");
    for s in &specs {
        println!("{:>4}  {:<14} {:>6}  {}", s.id, s.attack.family(), s.trials, s.label());
    }
    Ok(())
}

fn load_case(path: Option<&Path>) -> Result<NetworkCase> {
    let Some(path) = path else { return Ok(study_case()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let case = parse_matpower_case(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(case.with_voltage_limits(STUDY_VMIN, STUDY_VMAX)?)
}

fn run(args: &RunArgs) -> Result<()> {
    let available = all_specs(args.config.as_deref())?;
    let mut specs: Vec<ScenarioSpec> = if args.all {
        available.into_values().collect()
    } else {
        args.scenarios
            .iter()
            .map(|id| {
                available.get(id).cloned().ok_or_else(|| ScenarioError::Validation { id: *id, message: "unknown scenario".into() })
            })
            .collect::<Result<_, _>>()?
    };
    for spec in &mut specs {
        if args.replay {
            if let Some(replay) = reference_replay(spec.id) {
                *spec = ScenarioSpec { trials: 1, ..replay };
            }
        }
        if let Some(seed) = args.seed {
            spec.base_seed = seed;
        }
    }

    let config = AdmmConfig { rho: args.rho, primal_tol: args.tol, dual_tol: args.tol, max_iter: args.max_iter, ..AdmmConfig::default() };
    if !(config.rho > 0.0 && config.primal_tol > 0.0 && config.max_iter > 0) {
        bail!(ScenarioError::Validation { id: 0, message: "rho, tol and max-iter must be positive".into() });
    }
    let case = load_case(args.case.as_deref())?;
    let started = Instant::now();
    let study = Study::new(case, config, DetectorConfig::default())?;
    let results = study.run_all(&specs)?;
    let written = export(&study, &results, &args.out, ExportOptions { timing: args.timing })?;

    println!("clean run: {} iterations, financial metric {:.6}", study.clean.iterations(), study.clean_financial());
    for r in &results {
        print_result(r);
    }
    println!(
        "{} scenarios, {} files written to {} in {:.1} s",
        results.len(),
        written.len(),
        args.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn print_result(r: &ScenarioResult) {
    let a = &r.aggregate;
    let statuses: Vec<String> = a.status_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    let skipped = r.trials.iter().filter(|t| t.attack_error.is_some()).count();
    println!(
        "scenario {:03} {:<32} trials {:>2}  [{}]  iterations {:.1}  financial {:.6} +/- {:.6}  primal flagged {}/{}{}",
        r.spec.id,
        r.spec.label(),
        r.trials.len(),
        statuses.join(", "),
        a.iterations_mean,
        a.financial_mean,
        a.financial_std,
        a.primal_flagged_trials,
        r.trials.len(),
        if skipped > 0 { format!("  attack skipped in {skipped}") } else { String::new() },
    );
}

/// Largest disagreement between the stored aggregates and the trial rows.
fn aggregate_drift(summary: &Summary) -> f64 {
    summary
        .scenarios
        .iter()
        .map(|s| {
            let fin: Vec<f64> = s.trials.iter().map(|t| t.financial).collect();
            let (mean, std) = mean_std(&fin);
            (mean - s.aggregate.financial_mean).abs().max((std - s.aggregate.financial_std).abs())
        })
        .fold(0.0, f64::max)
}

fn report(dir: &Path) -> Result<()> {
    let summary = load_summary(&dir.join("summary.json"))?;
    println!(
        "boundary buses {:?}; clean run {} iterations, financial metric {:.6}",
        summary.boundary_ids, summary.clean_iterations, summary.clean_financial
    );
    println!(
        "{:>4}  {:<14} {:>6} {:>10} {:>12} {:>12} {:>8} {:>8} {:>9}",
        "id", "family", "trials", "iters", "financial", "std", "primal", "dual", "v_viol"
    );
    for s in &summary.scenarios {
        let violations: usize = s.trials.iter().map(|t| t.voltage_violations).sum();
        println!(
            "{:>4}  {:<14} {:>6} {:>10.1} {:>12.6} {:>12.6} {:>8} {:>8} {:>9}",
            s.id,
            s.family,
            s.trials.len(),
            s.aggregate.iterations_mean,
            s.aggregate.financial_mean,
            s.aggregate.financial_std,
            s.aggregate.primal_flagged_trials,
            s.aggregate.dual_flagged_trials,
            violations
        );
    }
    let drift = aggregate_drift(&summary);
    if drift > 1e-12 {
        bail!("summary aggregates disagree with their trial rows by {drift:e}");
    }
    println!("{} scenarios; aggregates consistent with trial rows", summary.scenarios.len());
    Ok(())
}
