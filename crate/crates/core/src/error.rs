use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("inverse price is negative ({0}); demand rate exceeds what the lead time allows")]
    InfeasiblePrice(f64),

    #[error("mean sojourn is undefined at zero arrival rate")]
    UndefinedSojourn,

    #[error("M/M/1 queue is unstable: arrival rate {lambda} >= service rate {mu}")]
    UnstableQueue { lambda: f64, mu: f64 },

    #[error("critical service level undefined without a lateness penalty (c = 0)")]
    UndefinedCriticalLevel,

    #[error("relative gain undefined for non-positive acceptance-policy profit {0}")]
    UndefinedGain(f64),

    #[error("closed-form solver requires capacity K = 1, got K = {0}")]
    UnsupportedCapacity(u32),

    #[error("simulation horizon must be positive, got {0}")]
    InvalidHorizon(f64),

    #[error("simulation requires a positive arrival rate")]
    ZeroArrivalRate,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
