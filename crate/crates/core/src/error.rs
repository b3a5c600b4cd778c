use thiserror::Error;

use crate::moments::MomentError;

/// Errors reported by the simulation and moment routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter violates its constraint. The message names it.
    #[error("{0}")]
    InvalidParams(String),

    /// `E[exp(kX)] - 1` is infinite for the requested jump distribution.
    #[error("exponential moment m_{k} diverges for jump distribution {dist}")]
    DivergentMoment { k: u32, dist: String },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("lambert_w0 is undefined for x = {0} < -1/e")]
    LambertDomain(f64),

    #[error(transparent)]
    Moments(#[from] MomentError),

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
