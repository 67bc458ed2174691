//! Simulation and optimization toolkit for secure over-the-air computation.
//!
//! Users pre-invert their channels so that the server receives the sum of
//! their data, and add correlated artificial noise that cancels at the server
//! but corrupts what eavesdroppers overhear. The crate samples topologies,
//! builds noise precoders, evaluates the closed-form accuracy and security
//! metrics, optimizes zero-forcing precoders by linear programming, and runs
//! the Monte Carlo sweeps behind the `ota-sim` binary.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod encoding;
pub mod experiments;
pub mod linalg;
pub mod lp;
pub mod metrics;
pub mod optimizer;

use thiserror::Error;

/// Top-level error; each variant maps onto one process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
            Error::Io { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
        }
    }
}

impl From<channel::ChannelError> for Error {
    fn from(e: channel::ChannelError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<linalg::LinalgError> for Error {
    fn from(e: linalg::LinalgError) -> Self {
        Error::Numeric(e.to_string())
    }
}

impl From<lp::LpError> for Error {
    fn from(e: lp::LpError) -> Self {
        Error::Numeric(e.to_string())
    }
}

impl From<encoding::EncodingError> for Error {
    fn from(e: encoding::EncodingError) -> Self {
        Error::Numeric(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
