use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the testbed.
#[derive(Debug, Error)]
pub enum EclError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("label {label} out of range 1..={classes}")]
    Label { label: usize, classes: usize },
    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),
    #[error("infeasible count distribution: total {total} < n_max {n_max}")]
    InfeasibleDistribution { total: usize, n_max: usize },
    #[error("target ({x:.4}, {y:.4}) outside reachable annulus [{min_reach:.4}, {max_reach:.4}]")]
    Reach {
        x: f64,
        y: f64,
        min_reach: f64,
        max_reach: f64,
    },
    #[error("scene generation failed: {0}")]
    Scene(String),
    #[error("dataset write failed at {path}: {source}")]
    DatasetWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing path: {0}")]
    MissingPath(PathBuf),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("incomplete numerosity coverage: no episodes with count {0}")]
    IncompleteCoverage(usize),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("rotation quality undefined: no valid timesteps")]
    UndefinedQuality,
    #[error("terminal phase undefined for numerosity {0}: terminal point at origin")]
    UndefinedPhase(usize),
    #[error("no completed runs under {0}")]
    EmptyReport(PathBuf),
}

pub type Result<T> = std::result::Result<T, EclError>;

impl EclError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EclError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(what: impl Into<String>, err: serde_json::Error) -> Self {
        EclError::Parse {
            what: what.into(),
            message: format!("{err} (line {}, column {})", err.line(), err.column()),
        }
    }
}
