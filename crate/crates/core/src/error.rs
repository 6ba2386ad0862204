use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid probability {prob} for arm {arm}")]
    InvalidProbability { arm: usize, prob: f64 },

    #[error("reward {reward} for arm {arm} outside [0, 1]")]
    InvalidReward { arm: usize, reward: f64 },

    #[error("arm index {arm} out of range for {arms} arms")]
    InvalidArm { arm: usize, arms: usize },

    #[error("average of arm {arm} undefined: {reason}")]
    UndefinedAverage { arm: usize, reason: &'static str },

    #[error("model mismatch: {0}")]
    ModelMismatch(&'static str),

    #[error("round {t} exceeds horizon {horizon}")]
    HorizonExceeded { t: u64, horizon: u64 },

    #[error("{name} = {value} outside its domain ({constraint})")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("sampler violated the bound's hypothesis: {0}")]
    HypothesisViolation(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trace: {0}")]
    Trace(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_round(self, round: u64) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }

    /// True when the root cause is a configuration problem.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Round { source, .. } | Error::Replicate { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
