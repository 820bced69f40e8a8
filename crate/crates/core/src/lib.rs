//! Gaussian stationary random fields with separable covariance, sampled at linear
//! cost by filtering white noise through per-axis rational shaping filters.
//!
//! - [`covariance`]: kernels and sampled covariance sequences.
//! - [`spectral`]: AR(1) and maximum-entropy ARMA shaping filters.
//! - [`sampler`]: seeded white noise and cascaded axis filtering.
//! - [`multiscale`]: conditional refinement to halved sampling distances.
//! - [`oracle`]: dense reference samplers and covariance estimators.

pub mod covariance;
pub mod error;
pub mod multiscale;
pub mod oracle;
pub mod sampler;
pub mod spectral;

pub use error::{GrfError, Result};
