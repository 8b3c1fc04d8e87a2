mod commands;
mod figures;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, IbmArgs};

#[derive(Parser)]
#[command(name = "egf", version, about = "Energy-structured population model: IBM ensembles, PDE solves, comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model and weight against the admissibility conditions.
    Validate { config: PathBuf },
    /// Run an ensemble of individual-based replicas.
    RunIbm {
        config: PathBuf,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the limiting PDE system.
    RunPde {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare an IBM output directory with a PDE output directory.
    Compare {
        ibm_dir: PathBuf,
        pde_dir: PathBuf,
        /// Time window as `t0:t1`.
        #[arg(long, default_value = "0:50")]
        window: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the CSV inputs of the figure scripts.
    Figures {
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        scales: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let (report, ok) = commands::validate(&config)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{text}");
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(if ok { 0 } else { 1 })
        }
        Command::RunIbm { config, replicas, out, threads, seed } => {
            let dir = commands::run_ibm(&config, &IbmArgs { replicas, out, threads, seed })?;
            println!("{}", dir.display());
            Ok(0)
        }
        Command::RunPde { config, out } => {
            let dir = commands::run_pde(&config, out.as_deref())?;
            println!("{}", dir.display());
            Ok(0)
        }
        Command::Compare { ibm_dir, pde_dir, window, out } => {
            let window = commands::parse_window(&window)?;
            let (dir, report) = commands::compare(&ibm_dir, &pde_dir, window, out.as_deref())?;
            let e = report.sup_relative_error;
            println!("{}", dir.display());
            eprintln!("sup relative error: N {:.4} E {:.4} Omega {:.4} R {:.4}", e.n, e.e, e.omega, e.r);
            Ok(0)
        }
        Command::Figures { out_dir, config, scales, replicas, threads, seed } => {
            figures::run(&out_dir, &figures::FigureArgs { config, scales, replicas, threads, seed })?;
            println!("{}", out_dir.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
