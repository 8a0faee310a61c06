use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use circov::cli;

#[derive(Parser)]
#[command(
    name = "circov",
    version,
    about = "Circumferential coverage control on annulus domains"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory, diagnostics, summary and snapshots.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
    /// Run the oracle and property checks for a scenario.
    Check { scenario: PathBuf },
    /// Render SVG snapshots from a trajectory CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        times: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Simulate {
            scenario,
            seed,
            out,
            dt,
            horizon,
        } => {
            let o = cli::Overrides {
                seed,
                out,
                dt,
                horizon,
            };
            cli::simulate(&scenario, &o).map(|r| {
                let s = &r.summary;
                println!("wrote {}", r.trajectory.display());
                println!(
                    "t = {} s, relative imbalance {}, fitted rate {} (R² {})",
                    s.final_time,
                    cli::sig9(s.final_relative_imbalance),
                    cli::sig9(s.fit_c2),
                    cli::sig9(s.fit_r2)
                );
                for p in &r.snapshots {
                    println!("wrote {}", p.display());
                }
                for t in &r.skipped {
                    eprintln!("note: no snapshot at t = {t}, the run ended at {}", s.final_time);
                }
                true
            })
        }
        Command::Check { scenario } => cli::check(&scenario).map(|rows| {
            print!("{}", cli::format_check_table(&rows));
            cli::checks_pass(&rows)
        }),
        Command::Plot { csv, times } => cli::plot(&csv, &times).map(|paths| {
            for p in paths {
                println!("wrote {}", p.display());
            }
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
