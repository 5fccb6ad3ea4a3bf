use thiserror::Error;

/// Plain-number snapshot of an iteration history, carried by
/// [`Error::NotConverged`] and written out as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("rank deficient: numerical rank {rank}, required {required}{hint}")]
    RankDeficient { rank: usize, required: usize, hint: &'static str },

    #[error("linear system not solvable: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (last step {last_step:.3e})")]
    NotConverged { iterations: usize, last_step: f64, history: Box<HistoryTable> },

    #[error("trajectory diverged at grid point {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("time {time} outside the trajectory span [{start}, {end}]")]
    Range { time: f64, start: f64, end: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Precondition(_)
            | Error::Initialization(_)
            | Error::Range { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::NotConverged { .. } | Error::Divergence { .. } | Error::Numerical(_) | Error::Singular(_) => 3,
            Error::RankDeficient { .. } => 4,
        }
    }
}
