use thiserror::Error;

/// Errors raised by the library. [`Error::category`] maps each one onto the
/// CLI exit-code classes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("site {k} outside the environment table (max site {max})")]
    SiteOutOfRange { k: usize, max: usize },

    #[error("infeasible corollary environment at n0={n0}: {detail}; smallest feasible n0 is {smallest:?}")]
    Infeasible {
        n0: usize,
        smallest: Option<usize>,
        detail: String,
    },

    #[error("continued fraction did not settle within depth {depth}: bracket [{lower}, {upper}]")]
    DepthCap { depth: usize, lower: f64, upper: f64 },

    #[error("{0}")]
    NotTransient(String),

    #[error("step cap {cap} exhausted on trajectory {trajectory} at position {position}")]
    StepCap {
        cap: u64,
        trajectory: u64,
        position: usize,
    },

    #[error("interval too large for the oracle: {states} states (limit {limit})")]
    OracleTooLarge { states: usize, limit: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

/// Coarse error classes, one per CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Model,
    NumericCap,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::InvalidParam(_) | Error::Config(_) | Error::Io(_) => Category::Config,
            Error::SiteOutOfRange { .. } | Error::Infeasible { .. } | Error::NotTransient(_) => {
                Category::Model
            }
            Error::DepthCap { .. }
            | Error::StepCap { .. }
            | Error::OracleTooLarge { .. }
            | Error::Numeric(_) => Category::NumericCap,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
