//! Command-line driver: `landau <experiment> --config PATH [--out DIR] [--seed N] [--threads N]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landau_spectral::io::{exit_code, parse_config, run, ExperimentKind};

#[derive(Parser)]
#[command(name = "landau", version, about = "Landau-Coulomb spectral solver and audit harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one state and check conservation, entropy and positivity.
    Simulate(Common),
    /// Operator identity suite, optionally with the inequality suites.
    Identities(Common),
    /// Energy balance of the weighted difference of two runs.
    EnergyAudit(Common),
    /// Contraction of perturbed pairs.
    Stability(Common),
    /// Weighted L^(3/2) balance along one run.
    Apriori(Common),
    /// Mollification error and gradient defect tables.
    Mollifier(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Identities(a) => (ExperimentKind::Identities, a),
        Command::EnergyAudit(a) => (ExperimentKind::EnergyAudit, a),
        Command::Stability(a) => (ExperimentKind::Stability, a),
        Command::Apriori(a) => (ExperimentKind::Apriori, a),
        Command::Mollifier(a) => (ExperimentKind::Mollifier, a),
    };
    if let Some(t) = args.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: cannot start {t} worker threads");
            return ExitCode::from(1);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let config = parse_config(&text).and_then(|mut c| {
        if let Some(out) = args.out {
            c.output_dir = out;
        }
        if let Some(seed) = args.seed {
            c.seed = seed;
        }
        c.with_kind(kind)
    });
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let result = run(&config);
    match &result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
