//! Estimation of material relative permittivities from received-power
//! measurements.
//!
//! The pipeline: a 2D image-method ray tracer ([`raytracer`]) enumerates the
//! propagation paths of every link; the forward model ([`forward`]) turns
//! permittivities into link gains and linearizes that map; the trust-region
//! GAMP solver ([`gamp`]) inverts it. [`oracle`] holds independent reference
//! computations and [`cli`] the command-line harness.

pub mod cli;
pub mod error;
pub mod forward;
pub mod gamp;
pub mod geometry;
pub mod oracle;
mod par;
pub mod raytracer;
pub mod rng;
pub mod scenario;
pub mod special;
pub mod templates;
pub mod trunc_gauss;

pub use error::{Error, Result};
pub use par::init_workers;
