use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// The footage archive violates a structural invariant.
    #[error("invalid archive: {0}")]
    Archive(String),

    /// The music profile violates a structural invariant.
    #[error("invalid music profile: {0}")]
    Profile(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate embedding (zero-norm mean) for shot {shot_id}")]
    DegenerateEmbedding { shot_id: u32 },

    #[error("empty saliency map for shot {shot_id} sample {sample}")]
    EmptySaliency { shot_id: u32, sample: usize },

    #[error("transport solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },

    #[error("pool empty: no shot reaches min_similarity {min_similarity}")]
    PoolEmpty { min_similarity: f64 },

    #[error("position infeasible: no pool shot offers a valid window at slot {position}")]
    PositionInfeasible { position: usize },

    #[error("oracle search space {size} exceeds cap {cap}")]
    OracleCapExceeded { size: u128, cap: u128 },

    #[error("no candidate sequence produced for segment {segment} after {attempts} attempts")]
    Unrecoverable { segment: usize, attempts: usize },

    #[error("no untried cluster left to switch to ({tried} already tried)")]
    NoAlternativeCluster { tried: usize },

    #[error("agent adapter: {0}")]
    Agent(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 4,
            Error::PoolEmpty { .. }
            | Error::PositionInfeasible { .. }
            | Error::Unrecoverable { .. }
            | Error::NoAlternativeCluster { .. } => 3,
            _ => 2,
        }
    }
}
