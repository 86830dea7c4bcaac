use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "exact enumeration of C({n}, {p}) = {count} splits exceeds the cap of {cap}; \
         use a Monte Carlo scorer instead"
    )]
    EnumerationCap {
        n: usize,
        p: usize,
        count: f64,
        cap: u64,
    },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("degenerate posterior: all mass underflowed to zero")]
    DegeneratePosterior,

    #[error("maximum likelihood fit failed (separation or divergence): {0}")]
    Separation(String),

    #[error("covariate column {column} is constant and cannot be standardized")]
    DegenerateCovariate { column: String },

    #[error("split {index} failed: {source}")]
    SplitFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{count} split(s) produced a non-finite log score under mean aggregation; set a floor or use a robust aggregation")]
    NonFiniteSplits { count: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
