//! Command-line pipeline: configuration, cell and Darcy stages, profile
//! reconstruction and regime tables.

pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{cmd_cell, cmd_darcy, cmd_profile, cmd_regime, CellReport, DarcyReport, ProfileReport, RegimeReport};
pub use config::{load_config, parse_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] porethin::Error),

    #[error("{0}")]
    Tolerance(String),
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// 2 for configuration errors, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 4,
            CliError::Solver(porethin::Error::Io(_)) | CliError::Solver(porethin::Error::Csv(_)) => 4,
            CliError::Solver(porethin::Error::Parameter { .. }) | CliError::Solver(porethin::Error::Geometry(_)) => 2,
            CliError::Solver(porethin::Error::Domain(_)) => 2,
            CliError::Solver(_) | CliError::Tolerance(_) => 3,
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub n_cell: Option<usize>,
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(n) = self.n_cell {
            if n < 4 || !n.is_multiple_of(2) {
                return Err(CliError::config("--n-cell", format!("must be even and at least 4, got {n}")));
            }
            config.cell_n = n;
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::config("--tol", format!("must be positive, got {tol}")));
            }
            config.solver.macro_options.tol = tol;
        }
        Ok(())
    }
}
