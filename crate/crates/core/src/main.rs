use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evenrep::harness::{self, ExperimentConfig, ExperimentKind, PAPER_SCALE_TRIALS};
use evenrep::targets::analytic_bounds;

#[derive(Parser)]
#[command(name = "sim", about = "Sleep/sense scheduling simulator and representation-quality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the analytic constants and check them by Monte Carlo.
    Bounds(RunArgs),
    /// Metric trajectories over radius and ratio sweeps.
    Converge(RunArgs),
    /// Protocol comparison at a single time point.
    Compare(RunArgs),
    /// Rounds-mode energy depletion runs.
    Lifetime(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use 200 trials per cell.
    #[arg(long)]
    paper_scale: bool,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> evenrep::Result<(ExperimentConfig, PathBuf)> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if config.experiment != kind {
        return Err(evenrep::Error::Config(format!(
            "config describes a {} experiment, not {}",
            config.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.paper_scale {
        config.trials = PAPER_SCALE_TRIALS;
        config.trial_seeds.clear();
    }
    let out = match (&args.out, &config.out_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => PathBuf::from("out").join(kind.name()),
    };
    config.out_dir = Some(out.display().to_string());
    config.validate()?;
    Ok((config, out))
}

fn run(kind: ExperimentKind, args: &RunArgs) -> evenrep::Result<bool> {
    let (config, out) = resolve(kind, args)?;
    if kind == ExperimentKind::Bounds {
        println!("name,value");
        for (name, value) in analytic_bounds().named() {
            println!("{name},{}", evenrep::geometry::fmt_sig17(value));
        }
        let report = harness::run_bounds(&config)?;
        harness::write_bounds(&report, &config, &out)?;
        for row in report.rows.iter().filter(|r| !r.pass()) {
            eprintln!(
                "FAIL {} {}: estimated {} outside [{}, {}]",
                row.scenario, row.quantity, row.estimated, row.lower, row.upper
            );
        }
        eprintln!("wrote {}", out.join("bounds.csv").display());
        return Ok(report.all_pass());
    }
    let batch = harness::run_batch(&config)?;
    let files = harness::write_batch(&batch, &out)?;
    for (radius, ratio) in &batch.calibration {
        eprintln!("sponsored cover ratio at radius {radius}: {ratio:.4}");
    }
    eprintln!("wrote {} files under {}", files.len(), out.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Bounds(a) => (ExperimentKind::Bounds, a),
        Command::Converge(a) => (ExperimentKind::Converge, a),
        Command::Compare(a) => (ExperimentKind::Compare, a),
        Command::Lifetime(a) => (ExperimentKind::Lifetime, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
