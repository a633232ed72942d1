use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedcycle::experiment::CellStatus;
use fedcycle::{run_command, validate_command, RunOptions};

#[derive(Parser)]
#[command(
    name = "fedcycle",
    version,
    about = "Federated learning with a cyclic server learning rate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repeat and grid cell of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override experiment.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-round wall time (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        /// Also write a matplotlib script that plots the round CSVs.
        #[arg(long)]
        plot_script: bool,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            jobs,
            seed,
            out,
            timing,
            plot_script,
        } => {
            let opts = RunOptions {
                jobs,
                seed,
                out,
                timing,
                plot_script,
            };
            run_command(&config, &opts).map(|report| {
                for c in &report.cells {
                    match c.status {
                        CellStatus::Ok => println!(
                            "{}: mean max acc {:.4}, median rounds {}",
                            c.cell,
                            c.mean_max_accuracy.unwrap_or(f64::NAN),
                            c.median_rounds_to_target.map_or("-".into(), |m| m.to_string())
                        ),
                        CellStatus::Failed => {
                            eprintln!("{}: failed: {}", c.cell, c.error.as_deref().unwrap_or("?"))
                        }
                    }
                }
                if let Some(best) = &report.best_cell {
                    println!("best cell: {}", best.cell);
                }
            })
        }
        Command::Validate { config } => validate_command(&config).map(|cfg| {
            let cells = fedcycle::experiment::cells(&cfg).len();
            println!("ok: {} cell(s) x {} repeat(s)", cells, cfg.repeats);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
