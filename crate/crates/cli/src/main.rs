use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use spoc_cli::experiment::{run_experiment, to_csv, Estimator, ExperimentConfig, Preset};
use spoc_cli::fit::{fit_file, write_report, FitReport, FitSettings};
use spoc_cli::io::{read_json, read_vocab, write_json};
use spoc_cli::topwords::top_words;
use spoc_cli::verify::{run_verify, Suite};
use spoc_cli::{CliError, Result};
use spoc_core::SpocOptions;

/// Topic-document estimation for pLSI topic models by successive projection.
#[derive(Parser)]
#[command(name = "spoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic sweep and write one CSV row per trial and metric.
    SynthSweep(SweepArgs),
    /// Fit a count matrix (MatrixMarket or CSV) from disk.
    Fit(FitArgs),
    /// Rank words per topic from a saved fit.
    TopWords(TopWordsArgs),
    /// Run the built-in self-checks and report a JSON verdict.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct EstimatorFlags {
    /// Project rows of Ŵ onto the probability simplex.
    #[arg(long)]
    clip: bool,
    /// Use the ellipsoid preconditioner before successive projection.
    #[arg(long, overrides_with = "no_preconditioned")]
    preconditioned: bool,
    #[arg(long, overrides_with = "preconditioned")]
    no_preconditioned: bool,
    /// Constant in the singular-value threshold for choosing K.
    #[arg(long)]
    threshold_const: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<Preset>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Overridden by the SPOC_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
    #[command(flatten)]
    flags: EstimatorFlags,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock seconds per trial instead of NA.
    #[arg(long)]
    timing: bool,
    /// Also write the full run record (config, trials, per-point summary) as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    matrix: PathBuf,
    /// One token per line, in column order.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Number of topics; chosen from the data when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Drop documents with fewer words than this.
    #[arg(long, default_value_t = 0)]
    min_words: u64,
    #[command(flatten)]
    flags: EstimatorFlags,
    #[arg(long, default_value = "spoc_out")]
    out_dir: PathBuf,
    /// Top words per topic to include in fit.json (needs --vocab).
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct TopWordsArgs {
    /// fit.json written by `spoc fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(short, default_value_t = 10)]
    m: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 600)]
    budget_secs: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Ok,
    VerifyFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerifyFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn seed_from_env(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var("SPOC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::config(format!("SPOC_SEED must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::SynthSweep(args) => sweep(args),
        Command::Fit(args) => fit(args),
        Command::TopWords(args) => {
            let report: FitReport = read_json(&args.fit)?;
            let vocab = read_vocab(&args.vocab)?;
            let words = top_words(&report.a_hat, &vocab, args.m)?;
            emit(&serde_json::to_string_pretty(&words)?, None)?;
            Ok(Outcome::Ok)
        }
        Command::Verify(args) => {
            let seed = seed_from_env(args.seed)?.unwrap_or(0);
            let report = run_verify(args.suite, Duration::from_secs(args.budget_secs), seed);
            emit(&serde_json::to_string_pretty(&report)?, args.out.as_deref())?;
            Ok(if report.passed { Outcome::Ok } else { Outcome::VerifyFailed })
        }
    }
}

fn sweep(args: SweepArgs) -> Result<Outcome> {
    let mut config = match (&args.preset, &args.config) {
        (_, Some(path)) => read_json::<ExperimentConfig>(path)?,
        (Some(p), None) => ExperimentConfig::preset(*p),
        (None, None) => return Err(CliError::config("one of --preset or --config is required")),
    };
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = seed_from_env(args.seed)? {
        config.seed = s;
    }
    if let Some(e) = args.estimator {
        config.estimator = e;
    }
    if args.flags.preconditioned && config.estimator == Estimator::Spoc {
        config.estimator = Estimator::SpocPreconditioned;
    }
    if args.flags.no_preconditioned {
        if config.estimator == Estimator::SpocAdaptive {
            return Err(CliError::config("the adaptive estimator is always preconditioned"));
        }
        config.estimator = Estimator::Spoc;
    }
    config.clip |= args.flags.clip;
    if let Some(c) = args.flags.threshold_const {
        config.threshold_const = c;
    }

    let record = run_experiment(&config, args.jobs)?;
    emit(&to_csv(&record, args.timing), args.out.as_deref())?;
    if let Some(path) = &args.summary {
        write_json(&record, path)?;
    }
    Ok(Outcome::Ok)
}

fn fit(args: FitArgs) -> Result<Outcome> {
    let defaults = SpocOptions::default();
    let options = SpocOptions {
        preconditioned: !args.flags.no_preconditioned,
        clip_to_simplex: args.flags.clip,
        threshold_const: args.flags.threshold_const.unwrap_or(defaults.threshold_const),
        ..defaults
    };
    let settings = FitSettings {
        k: args.k,
        min_words: args.min_words,
        options,
    };
    let report = fit_file(&args.matrix, args.vocab.as_deref(), args.top, &settings)?;
    write_report(&report, &args.out_dir)?;
    log::info!("K = {}, results in {}", report.k, args.out_dir.display());
    Ok(Outcome::Ok)
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}
