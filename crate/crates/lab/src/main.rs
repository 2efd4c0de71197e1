use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wreath_lab_cli::config::{Overrides, RunConfig};
use wreath_lab_cli::experiments::EXPERIMENTS;
use wreath_lab_cli::report::{emit_report, Status};
use wreath_lab_cli::{default_out_dir, run_experiment, RunError, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "lab", version, about = "Run wreath-lab experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run {
        experiment: String,
        /// JSON config document; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory [default: lab-out/<experiment>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Largest number of elements any single enumeration may hold.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for e in EXPERIMENTS {
                println!("{:<24}{}", e.name, e.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            experiment,
            config,
            out,
            seed,
            budget,
        } => match run(&experiment, config, Overrides { seed, budget, out }) {
            Ok(code) => ExitCode::from(code as u8),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_ERROR as u8)
            }
        },
    }
}

fn run(experiment: &str, config: Option<PathBuf>, overrides: Overrides) -> Result<i32, RunError> {
    let base = match &config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.apply(&overrides);
    let result = run_experiment(experiment, &cfg)?;
    let dir = cfg.out.clone().unwrap_or_else(|| default_out_dir(experiment));
    let path = emit_report(&result.report, &result.tables, &dir)?;
    for c in &result.report.checks {
        let mark = if c.status == Status::Pass { "PASS" } else { "FAIL" };
        println!("{mark} {}", c.name);
    }
    let status = if result.report.status == Status::Pass { "pass" } else { "fail" };
    println!("{experiment}: {status} ({})", path.display());
    Ok(result.exit_code())
}
