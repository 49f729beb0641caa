use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),

    #[error("degenerate interval: t_b = {t_b} must exceed t_a = {t_a}")]
    DegenerateInterval { t_a: f64, t_b: f64 },

    #[error("{op} is not supported for the {model} model")]
    Unsupported { op: &'static str, model: &'static str },

    #[error("phi has no finite infimum for this model")]
    Unbounded,

    #[error("phi is not bounded above for this model; use the approximate sampler")]
    UnboundedPhi,

    #[error("proposal budget of {max_proposals} exhausted before acceptance")]
    BudgetExceeded { max_proposals: u64 },

    #[error("block ({t_a}, {t_b}) in sweep {sweep}: {source}")]
    InBlock {
        t_a: f64,
        t_b: f64,
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("convergence rate {0} is not below one")]
    RateNotLessThanOne(f64),

    #[error("invalid convergence rate {0}")]
    InvalidRate(f64),

    #[error("numerically singular: {0}")]
    NumericallySingular(String),

    #[error("series is degenerate (zero variance or non-finite values)")]
    DegenerateSeries,

    #[error("output error: {0}")]
    Io(String),

    #[error("only {retained} autocorrelation lags above the noise floor; need at least 3")]
    InsufficientSignal { retained: usize },
}

impl Error {
    /// Strips any block annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::InBlock { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_budget_exceeded(&self) -> bool {
        matches!(self.root(), Error::BudgetExceeded { .. })
    }
}
