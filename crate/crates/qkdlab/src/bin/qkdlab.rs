//! Command-line driver for the verification suites.
//!
//! Exit codes: 0 on success, 1 on usage or config errors, 2 when a
//! verification tolerance is breached (or a replay fails to reproduce).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qkdlab::harness::{self, ExperimentConfig, ExperimentKind, RowRef};

#[derive(Parser)]
#[command(name = "qkdlab", version, about = "QKD checking-protocol simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run protocol trials against the configured attack.
    RunProtocol(ExperimentArgs),
    /// Check that coherent attacks and their Bell-diagonal counterparts give
    /// identical outcome statistics.
    VerifyClassicalization(ExperimentArgs),
    /// Check that local and nonlocal checking measurements agree.
    VerifyLocalEquivalence(ExperimentArgs),
    /// Check the entropy identities, Holevo bound, and refined-information
    /// relations.
    VerifySecurityBounds(ExperimentArgs),
    /// Sweep the sifting pass probability over the illegitimate-pair count.
    SiftSweep(ExperimentArgs),
    /// Reconstruct one trial from a stored report row.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// JSON experiment configuration the row came from.
    #[arg(long)]
    config: PathBuf,
    /// JSON file holding one report row object.
    #[arg(long)]
    row: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qkdlab: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> qkdlab::Result<ExitCode> {
    match cli.command {
        Command::Replay(args) => replay(args),
        Command::RunProtocol(args) => experiment(ExperimentKind::RunProtocol, args),
        Command::VerifyClassicalization(args) => {
            experiment(ExperimentKind::VerifyClassicalization, args)
        }
        Command::VerifyLocalEquivalence(args) => {
            experiment(ExperimentKind::VerifyLocalEquivalence, args)
        }
        Command::VerifySecurityBounds(args) => {
            experiment(ExperimentKind::VerifySecurityBounds, args)
        }
        Command::SiftSweep(args) => experiment(ExperimentKind::SiftSweep, args),
    }
}

fn experiment(kind: ExperimentKind, args: ExperimentArgs) -> qkdlab::Result<ExitCode> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if config.experiment != kind {
        return Err(qkdlab::Error::Config(format!(
            "config names experiment {}, but the {kind} subcommand was invoked",
            config.experiment
        )));
    }
    if let Some(seed) = args.seed {
        config.protocol.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.protocol.trials = trials;
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    config.validate()?;

    let outcome = harness::run_experiment(&config)?;
    let verdict = if outcome.pass() { "PASS" } else { "FAIL" };
    println!(
        "{}: {verdict} ({} rows, seed {})",
        config.experiment,
        outcome.rows.len(),
        config.protocol.seed
    );
    for failure in &outcome.summary.failures {
        println!("  failure: {failure}");
    }
    for file in &outcome.report_files {
        println!("  wrote {}", file.display());
    }
    Ok(if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn replay(args: ReplayArgs) -> qkdlab::Result<ExitCode> {
    let config = ExperimentConfig::from_file(&args.config)?;
    let row_text = std::fs::read_to_string(&args.row)?;
    let row_ref: RowRef = serde_json::from_str(&row_text)?;
    let output = harness::replay(&config, &row_ref)?;

    println!("{}", serde_json::to_string_pretty(&output.transcript)?);
    for (name, value) in &output.row.metrics {
        println!("  {name} = {value}");
    }
    match output.matches {
        Some(true) => {
            println!("replay: metrics match the stored row bit-exactly");
            Ok(ExitCode::SUCCESS)
        }
        Some(false) => {
            println!("replay: metrics DIFFER from the stored row");
            Ok(ExitCode::from(2))
        }
        None => {
            println!("replay: no stored metrics to compare");
            Ok(ExitCode::SUCCESS)
        }
    }
}
