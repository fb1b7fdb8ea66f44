//! Partition-free particle sampling along guided density paths.
//!
//! The library moves a particle ensemble from an easy initial distribution
//! to an unnormalized target by following a user-chosen density path. A
//! small neural field is trained at each path time to satisfy the
//! continuity equation's partition-free residual; particles then take an
//! Euler step along the field, with optional Langevin adjustment against
//! the intermediate density. Langevin dynamics and SVGD are included as
//! baselines, together with an analytic Gaussian-path oracle, the sampling
//! metrics used by the bundled experiments, and the `pathflow` CLI.

pub mod error;
pub mod field;
pub mod lws;
pub mod metrics;
pub mod oracle;
pub mod record;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
