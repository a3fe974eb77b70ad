//! Plug-and-play unadjusted Langevin sampling (PnP-ULA) with exact
//! Gaussian-mixture priors, and tools to measure how the sampling
//! distribution reacts to denoiser and forward-model mismatch.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Coordinate loops index several arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod assignment;
pub mod denoiser;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod provenance;
pub mod sampler;
pub mod samples;

pub use denoiser::{Denoiser, FnDenoiser, MismatchedDenoiser, MmseDenoiser};
pub use error::{Error, Result};
pub use forward::{LinearForwardModel, Observation};
pub use gmm::{GaussianComponent, GaussianMixture, PosteriorMixture};
pub use sampler::{ChainMeta, ChainParams, DriftConfig, Projection};
pub use samples::{Provenance, SampleSet};
