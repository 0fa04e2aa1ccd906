use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the analysis pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("refinement error: region `{region}` is {thickness} nm thick but the cell size is {cell} nm")]
    Refinement {
        region: String,
        thickness: f64,
        cell: f64,
    },

    #[error("integrity error: conductor `{0}` is split into disconnected parts")]
    Integrity(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("calibration failed at stage {stage}: {reason}")]
    Calibration { stage: String, reason: String },

    #[error("electro-thermal coupling diverged after {iterations} iterations (last update {last_update:.3e} K)")]
    CouplingDivergence { iterations: usize, last_update: f64 },

    #[error("connectivity error: {0}")]
    Connectivity(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("transient failure at t = {time:.6e} s: {reason}")]
    Transient { time: f64, reason: String },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("parse error at {file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, files, names) rather
    /// than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Geometry(_)
                | Error::Refinement { .. }
                | Error::Lookup(_)
                | Error::Validation(_)
                | Error::Comparison(_)
                | Error::Parse { .. }
                | Error::Io { .. }
        )
    }
}
