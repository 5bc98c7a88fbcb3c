//! Command-line front end: bound tables, Monte Carlo experiments, and
//! property audits. Exit codes: 0 success, 1 configuration or I/O failure,
//! 2 certificate violations found by an audit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use unistab::bounds::{bound_table, table_to_csv, BoundTableRow, GammaRule};
use unistab::harness::{
    run_clamp_audit, run_excess_experiment, run_solver_audit, run_tail_experiment, write_text,
    ExperimentConfig, LambdaRule, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "unistab",
    version,
    about = "Tail bounds, Monte Carlo experiments, and stability audits"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the closed-form estimation-error bounds.
    Bounds(BoundsArgs),
    /// Estimation-error tail experiment.
    Tail(RunArgs),
    /// Excess-loss quantile experiment.
    Excess(RunArgs),
    /// Exhaustive property audit of the adaptive clamp.
    ClampAudit(ClampAuditArgs),
    /// Neighbor-pair stability audit of the trained solver.
    Audit(AuditArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// Sample sizes to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    n: Vec<u128>,
    /// Tail levels; one table block per level.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    delta: Vec<f64>,
    /// Stability rule: fixed:VALUE, inv-sqrt-n, or inv-n.
    #[arg(long, default_value = "inv-n")]
    gamma_rule: String,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; the flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mean-erm or constant.
    #[arg(long)]
    problem: Option<String>,
    /// reg-erm, smooth-gd, or resample-sgd.
    #[arg(long)]
    solver: Option<String>,
    /// Regularization: a number or log-n-over-sqrt-n.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Tail levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ClampAuditArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct AuditArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    n: Vec<usize>,
    /// Neighbor pairs per sample size.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Regularization: a number or log-n-over-sqrt-n.
    #[arg(long)]
    lambda: Option<String>,
    /// Audit against this stability instead of the solver certificate.
    #[arg(long)]
    declared_gamma: Option<f64>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::Tail(a) => cmd_tail(a),
        Cmd::Excess(a) => cmd_excess(a),
        Cmd::ClampAudit(a) => cmd_clamp_audit(a),
        Cmd::Audit(a) => cmd_audit(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_as<T: FromStr>(text: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| format!("{e}"))
}

fn parse_format(flag: &Option<String>) -> Result<Option<ReportFormat>, String> {
    flag.as_deref().map(parse_as).transpose()
}

fn read_text(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn deliver(text: &str, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => write_text(path, text).map_err(|e| e.to_string()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn merge(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json(&read_text(path)?)
            .map_err(|e| format!("{}: {e}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.problem {
        cfg.problem = parse_as(p)?;
    }
    if let Some(s) = &args.solver {
        cfg.solver = parse_as(s)?;
    }
    if let Some(l) = &args.lambda {
        cfg.lambda = parse_as(l)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(n) = &args.n {
        cfg.n = n.clone();
    }
    if let Some(delta) = &args.delta {
        cfg.delta = delta.clone();
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = parse_format(&args.format)? {
        cfg.format = format;
    }
    Ok(cfg)
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode, String> {
    let rule: GammaRule = parse_as(&args.gamma_rule)?;
    let format = parse_format(&args.format)?.unwrap_or_default();
    let mut rows: Vec<BoundTableRow> = Vec::new();
    for &delta in &args.delta {
        rows.extend(bound_table(&args.n, rule, delta).map_err(|e| e.to_string())?);
    }
    let text = match format {
        ReportFormat::Csv => table_to_csv(&rows),
        ReportFormat::Json => {
            let mut t = serde_json::to_string_pretty(&rows).map_err(|e| e.to_string())?;
            t.push('\n');
            t
        }
    };
    deliver(&text, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_tail(args: RunArgs) -> Result<ExitCode, String> {
    let cfg = merge(&args)?;
    let report = run_tail_experiment(&cfg).map_err(|e| e.to_string())?;
    deliver(&report.render(cfg.format), cfg.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_excess(args: RunArgs) -> Result<ExitCode, String> {
    let cfg = merge(&args)?;
    let report = run_excess_experiment(&cfg).map_err(|e| e.to_string())?;
    deliver(&report.render(cfg.format), cfg.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_clamp_audit(args: ClampAuditArgs) -> Result<ExitCode, String> {
    let format = parse_format(&args.format)?.unwrap_or_default();
    let report = run_clamp_audit(args.trials, args.seed).map_err(|e| e.to_string())?;
    deliver(&report.render(format), args.out.as_deref())?;
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("clamp audit found {} violating instances", report.violations);
        Ok(ExitCode::from(2))
    }
}

fn cmd_audit(args: AuditArgs) -> Result<ExitCode, String> {
    let format = parse_format(&args.format)?.unwrap_or_default();
    let lambda = match &args.lambda {
        Some(l) => parse_as::<LambdaRule>(l)?,
        None => LambdaRule::default(),
    };
    let report = run_solver_audit(&args.n, args.trials, args.seed, lambda, args.declared_gamma)
        .map_err(|e| e.to_string())?;
    deliver(&report.render(format), args.out.as_deref())?;
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("stability audit found violations:\n{report}");
        Ok(ExitCode::from(2))
    }
}
