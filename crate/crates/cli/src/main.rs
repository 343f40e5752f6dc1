use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use porethin::params::{parse_rational, LimitModelKind, Rational};
use porethin_cli::{cmd_cell, cmd_darcy, cmd_profile, cmd_regime, load_config, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "porethin", version, about = "Homogenized Darcy flow of a Carreau fluid in a very thin porous film")]
struct Cli {
    /// Worker threads for cell solves (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, replacing `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cell subdivisions, replacing `cell.n`.
    #[arg(long)]
    n_cell: Option<usize>,
    /// Tolerance of the macroscopic solve, replacing `solver.macro_tol`.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    NewtonianZeroShear,
    NewtonianInfiniteShear,
    Carreau,
    PowerLaw,
}

impl From<LawArg> for LimitModelKind {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::NewtonianZeroShear => LimitModelKind::NewtonianZeroShear,
            LawArg::NewtonianInfiniteShear => LimitModelKind::NewtonianInfiniteShear,
            LawArg::Carreau => LimitModelKind::Carreau,
            LawArg::PowerLaw => LimitModelKind::PowerLaw,
        }
    }
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Permeability tensor or flux-map table of the unit cell.
    Cell(RunArgs),
    /// Cell stage followed by the macroscopic Darcy problem.
    Darcy(RunArgs),
    /// Through-thickness velocity at a macroscopic point.
    Profile {
        #[command(flatten)]
        run: RunArgs,
        /// Macroscopic point, replacing `profile.x`.
        #[arg(long, num_args = 2, value_names = ["X1", "X2"])]
        x: Option<Vec<f64>>,
        /// Limit law to use instead of the one selected by r and gamma.
        #[arg(long, value_enum)]
        law: Option<LawArg>,
    },
    /// Regime, limit model and scaling exponents for (ell, gamma, r).
    Regime {
        #[arg(long, value_parser = rational)]
        ell: Rational,
        #[arg(long, value_parser = rational)]
        gamma: Rational,
        #[arg(long, value_parser = rational)]
        r: Rational,
    },
}

fn configure(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = load_config(&run.config)?;
    Overrides {
        out: run.out.clone(),
        n_cell: run.n_cell,
        tol: run.tol,
    }
    .apply(&mut config)?;
    Ok(config)
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    Ok(match cli.command {
        Command::Cell(run) => cmd_cell(&configure(&run)?)?.to_string(),
        Command::Darcy(run) => cmd_darcy(&configure(&run)?)?.to_string(),
        Command::Profile { run, x, law } => {
            let x = x.map(|v| [v[0], v[1]]);
            cmd_profile(&configure(&run)?, x, law.map(Into::into))?.to_string()
        }
        Command::Regime { ell, gamma, r } => cmd_regime(ell, gamma, r)?.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
