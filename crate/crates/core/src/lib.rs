//! Extremes of hierarchical Gaussian fields interpolating between the random
//! energy model and the branching random walk.
//!
//! * [`field`]: closed-form quantities (centering, intensity, overlaps,
//!   barriers).
//! * [`sampler`]: exact depth-first sampling of the whole field, streaming out
//!   the points that land in a window.
//! * [`stats`]: mean measures, avoidance functions, overlap census, maximum
//!   law and the log-correction estimator.
//! * [`bridge`]: discrete bridges, the ballot probability `1/n` and its
//!   perturbation.
//! * [`poisson`]: Chen–Stein bound and Poisson total variation.
//! * [`runner`]: declarative experiments, result files and plot tables.

// Reference constants are kept at the digits they were computed to.
#![allow(clippy::excessive_precision)]

pub mod bridge;
pub mod error;
pub mod field;
pub mod normal;
pub mod poisson;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod stats;

#[cfg(doctest)]
mod book;

pub use error::{Error, Result};
pub use field::{beta_c, centering, intensity, Barrier, Interval, ModelParams};
pub use rng::SeedSpec;
pub use sampler::{
    replicate_batch, sample_topk, sample_window, ExtremalPoint, PathState, PointFilter,
    PointProcessSample, WindowSampler,
};
