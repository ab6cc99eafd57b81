use std::path::PathBuf;

use clap::{Parser, Subcommand};

use nle_cli::commands::{cmd_check, cmd_oracle_compare, cmd_solve, cmd_sweep};
use nle_cli::problem::Overrides;

/// Certificate checks and mild-solution solving for nonlocal Cauchy problems.
#[derive(Parser)]
#[command(name = "nle", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the existence certificates and print the margin ledger.
    Check {
        file: PathBuf,
        /// Override the grid resolution (even, >= 2).
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Run the fixed-point solver and emit the trajectory CSV.
    Solve {
        file: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        n_steps: Option<usize>,
        /// Picard damping in (0, 1].
        #[arg(long)]
        damping: Option<f64>,
        /// Fixed-point residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Move the last nonlocal point across the grid and tabulate margins.
    Sweep {
        file: PathBuf,
        /// Number of support positions to visit.
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Compare the fixed-point solution against the shooting oracle.
    OracleCompare {
        file: PathBuf,
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let (code, output) = match cli.command {
        Command::Check { file, n_steps } => cmd_check(
            &file,
            &Overrides {
                n_steps,
                ..Default::default()
            },
        ),
        Command::Solve {
            file,
            csv,
            n_steps,
            damping,
            tol,
        } => cmd_solve(
            &file,
            &Overrides {
                n_steps,
                tol,
                damping,
            },
            csv.as_deref(),
        ),
        Command::Sweep {
            file,
            points,
            csv,
            n_steps,
            damping,
            tol,
        } => cmd_sweep(
            &file,
            &Overrides {
                n_steps,
                tol,
                damping,
            },
            points,
            csv.as_deref(),
        ),
        Command::OracleCompare {
            file,
            n_steps,
            damping,
            tol,
        } => cmd_oracle_compare(
            &file,
            &Overrides {
                n_steps,
                tol,
                damping,
            },
        ),
    };
    print!("{output}");
    std::process::exit(code);
}
