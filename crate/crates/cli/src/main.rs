use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use perfhom::commands::{cmd_cell, cmd_compare, cmd_simulate, load_config, Check, Overrides, Status, Which};
use perfhom::CliError;

#[derive(Parser)]
#[command(name = "perfhom", version, about = "Homogenization experiments for the stochastic heat equation on perforated domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `[experiment] threads`).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Micro,
    Macro,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problem and write B and theta.
    Cell {
        #[command(flatten)]
        common: Common,
    },
    /// Run one micro (at --eps) or macro ensemble.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "micro")]
        which: Side,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Compare the micro family with the effective equation.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{} {} {}", c.name, c.status, c.detail);
    }
    !checks.iter().any(|c| c.status == Status::Fail)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let load = |c: &Common| load_config(&c.config, &Overrides { out: c.out.clone(), threads: c.threads });
    let ok = match cli.command {
        Command::Cell { common } => {
            let sol = cmd_cell(&load(&common)?)?;
            println!("theta {:.12e}", sol.theta);
            println!("B {:.12e} {:.12e} {:.12e} {:.12e}", sol.b[0][0], sol.b[0][1], sol.b[1][0], sol.b[1][1]);
            true
        }
        Command::Simulate { common, which, eps } => {
            let which = match which {
                Side::Micro => Which::Micro,
                Side::Macro => Which::Macro,
            };
            print_checks(&cmd_simulate(&load(&common)?, which, eps)?.checks)
        }
        Command::Compare { common } => print_checks(&cmd_compare(&load(&common)?)?.checks),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed("see the report in the output directory".into()))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
