//! `darboux`: list the solution families, export potentials, run the
//! verification suite and propagate transformed states.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "darboux", version, about = "Nonstationary Darboux transformations and their numerical verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the solution families with their parameters and constraints.
    Catalog {
        /// Show a single family.
        #[arg(long)]
        family: Option<String>,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Export V₁ = V₀ + A on a grid, next to the printed closed form.
    Potential(RunArgs),
    /// Run the verification suite and write the JSON report.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Also run the negative controls (their pass condition is inverted).
        #[arg(long)]
        negative_controls: bool,
    },
    /// Propagate transformed states with Crank–Nicolson and export both the
    /// numerical and the analytic grids.
    Propagate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration; the built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict the run to one family kind.
    #[arg(long)]
    family: Option<String>,
    /// Override a family parameter, e.g. `--param C=0.5` (needs `--family`).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Catalog { family, json } => commands::catalog(family.as_deref(), json),
        Command::Potential(a) => commands::potential(&a.into()),
        Command::Verify { run, negative_controls } => {
            let mut opts: commands::RunOptions = run.into();
            opts.negative_controls = negative_controls;
            commands::verify(&opts)
        }
        Command::Propagate(a) => commands::propagate(&a.into()),
    };
    match result {
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

impl From<RunArgs> for commands::RunOptions {
    fn from(a: RunArgs) -> Self {
        commands::RunOptions {
            config: a.config,
            out: a.out,
            family: a.family,
            params: a.params,
            json: a.json,
            negative_controls: false,
        }
    }
}
