//! Simulator and analysis toolkit for distributed estimation of sparse
//! normal means under communication constraints.
//!
//! A fusion center coordinates `M` machines, each holding one noisy
//! observation of the same `K`-sparse mean vector. The crate implements the
//! voting protocols (top-L replies and threshold replies), the averaging
//! round that refines the recovered support into an estimate, closed-form
//! machine budgets and thresholds with their feasibility conditions, and a
//! Monte Carlo harness that sweeps the signal-strength axis and accounts
//! for every transmitted bit.

pub mod bounds;
pub mod cli;
pub mod codec;
pub mod harness;
pub mod model;
pub mod protocols;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// r >= 1 means a single machine can recover the support by itself;
    /// the multi-machine budget formulas diverge there by construction.
    #[error("single-machine regime: r = {0} >= 1")]
    SingleMachineRegime(f64),

    #[error("threshold {0} is nonpositive after truncation")]
    DegenerateThreshold(f64),

    #[error("tuned m_eff = {needed} exceeds the available {available} machines")]
    MachineBudget { needed: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
