use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use expeuler::catalog::listing;
use expeuler_cli::{check, exit, run, Overrides};

#[derive(Parser)]
#[command(name = "expeuler", version, about = "Exponential Euler SPDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the environment and the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the sample loop.
        #[arg(long)]
        workers: Option<usize>,
        /// Report directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in drift and diffusion coefficients.
    Catalog,
    /// Validate a config without running it.
    Check { config: PathBuf },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => match run(&config, &Overrides { seed, workers, out }) {
            Ok(res) => {
                for c in &res.report.checks {
                    println!("{} {} = {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value);
                }
                println!("report {}", res.report_path.display());
                println!("table {}", res.csv_path.display());
                code(res.code)
            }
            Err(f) => {
                eprintln!("error: {f}");
                code(f.code)
            }
        },
        Command::Catalog => {
            let text = serde_json::to_string_pretty(&listing()).expect("catalog serializes");
            // a closed pipe is not an error for a listing
            let _ = writeln!(std::io::stdout(), "{text}");
            code(exit::SUCCESS)
        }
        Command::Check { config } => match check(&config) {
            Ok(_) => {
                println!("ok");
                code(exit::SUCCESS)
            }
            Err(f) => {
                eprintln!("error: {f}");
                code(f.code)
            }
        },
    }
}
