//! Rectified pessimistic-optimistic learning (RPOL) for continuum-armed
//! bandits with a black-box constraint.
//!
//! The crate is `no_std` with `alloc`. Reward and constraint are modelled
//! with exact Gaussian-process posteriors under a square-exponential kernel;
//! the learner maximises an optimistic reward estimate minus a rectified,
//! pessimistic constraint estimate scaled by a cumulative penalty.
//!
//! Layout:
//! - [`kernel`], [`gp`]: kernel, exact posterior with incremental Cholesky
//!   factor, windowed and censored variants, grid-tracked posterior.
//! - [`estimators`]: confidence scalers and optimistic/pessimistic pairs.
//! - [`policy`]: rectified penalty, action selection and the round loop
//!   state for the three variants (plus a primal-dual stand-in).
//! - [`domain`]: box domains, grid argmax with optional refinement and the
//!   offline constrained oracle.
//! - [`env`]: synthetic environments, noise and delay sampling.
//! - [`metrics`], [`bounds`]: regret/violation series, aggregation and
//!   replayable cumulative-deviation bound checks.
//! - [`harness`]: runs a configured experiment end to end.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bounds;
pub mod domain;
pub mod env;
pub mod error;
pub mod estimators;
pub mod feedback;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod policy;

pub use domain::{BoxDomain, Grid, GridSpec};
pub use env::{DelaySpec, Environment, NoiseSpec};
pub use error::{Error, Result};
pub use estimators::{ConfidenceParams, Diagnostics, EstimatorPair};
pub use feedback::{Channel, FeedbackEvent};
pub use gp::{GpState, PosteriorValue, TrackedPosterior};
pub use harness::{run, RunConfig};
pub use kernel::KernelSpec;
pub use metrics::{MetricSeries, Trace};
pub use policy::{PenaltyState, PolicyConfig, PolicyVariant, Pricing, Rpol, ScalerRule};
