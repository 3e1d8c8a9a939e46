use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid linear program: {0}")]
    InvalidLp(String),

    #[error("inconsistent bounds on variable `{name}`: lower {lower} > upper {upper}")]
    InconsistentBounds { name: String, lower: f64, upper: f64 },

    #[error("invalid uncertainty set: {0}")]
    InvalidUncertainty(String),

    #[error("uncertainty set does not contain the origin: row `{row}` violated by {violation:.3e}")]
    OriginExcluded { row: String, violation: f64 },

    #[error("uncertainty set is unbounded along `{0}`")]
    UnboundedSet(String),

    #[error("restricted uncertainty set is empty: {0}")]
    EmptyRestricted(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("relaxation has {size} lifted variables, above the cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("vertex oracle unavailable: {0}")]
    OracleUndefined(String),

    #[error("sampling aborted: {failed} of {trials} trials failed ({detail})")]
    SamplingAborted {
        failed: usize,
        trials: usize,
        detail: String,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown corpus entry `{0}`")]
    UnknownCorpus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
