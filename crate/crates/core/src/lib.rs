//! Simulation of extrinsic stress-release point processes.
//!
//! The intensity of the process grows exponentially between arrivals and is
//! cut multiplicatively at every arrival, whether the arrival belongs to the
//! process itself or to an independent external Poisson stream:
//!
//! ```text
//! λ_t = λ₀ exp(β t − S_t − S'_t)
//! ```
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`model`] | parameters, jump laws, event logs, pathwise intensity |
//! | [`exact`] | exact sampling by composition, interarrival law and its Lambert-W inverse |
//! | [`thinning`] | windowed thinning sampler and Δ grid search |
//! | [`moments`] | reciprocal moments `E[λ_t^{-k}]`, product moment, covariance |
//! | [`montecarlo`] | seeded parallel estimation and simulator comparison |
//! | [`cli`] | the `srp` command-line front end |
//!
//! ```
//! use stress_release::{simulate_path, JumpDist, ModelParams};
//!
//! let params = ModelParams::new(1.0, 1.5, 2.0, JumpDist::exponential(1.0), JumpDist::exponential(2.0))?;
//! let path = simulate_path(&params, 10.0, 7)?;
//! assert!(path.events().windows(2).all(|w| w[0].time < w[1].time));
//! # Ok::<(), stress_release::Error>(())
//! ```
//!
//! A longer guide lives in the `book/` directory of the repository; its code
//! listings are compiled and run as doctests of this crate.

// NaN must fail range checks, so negated comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
mod error;
pub mod exact;
pub mod lambert;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod thinning;

pub use error::{Error, Result};
pub use exact::{interarrival_cdf, inverse_interarrival_cdf, sample_composition, simulate_path, CompositionDraw};
pub use lambert::lambert_w0;
pub use model::{
    exp_moment, intensity_at, validate, Event, EventKind, EventLog, IntensityState, JumpDist, ModelParams,
};
pub use moments::{covariance, product_moment, theta1, theta2, theta_k_recursive, MomentCurve, MomentParams};
pub use montecarlo::{compare_estimators, estimate_reciprocal_moment, McConfig, McEstimate, Method};
pub use rng::StreamSeed;
pub use thinning::{grid_search_delta, simulate_path_thinning, upper_bound, BoundWindow};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/thinning.md")]
    mod thinning {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
