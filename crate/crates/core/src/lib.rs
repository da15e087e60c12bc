//! Joint alignment and reconstruction of multislice dynamic MRI via
//! variational manifold learning.
//!
//! The crate is organized around the experiment pipeline:
//!
//! - [`phantom`]: dynamic digital phantom with known per-slice motion phases.
//! - [`sampling`]: golden-angle spiral/radial trajectories and frame binning.
//! - [`encoding`]: multi-coil non-Cartesian measurement operators (forward,
//!   exact adjoint, noise model), direct-DFT reference and gridded fast path.
//! - [`generator`]: the shared volumetric decoder and its reverse-mode
//!   derivatives.
//! - [`variational`]: reparameterized Gaussian posteriors, closed-form KL,
//!   temporal smoothness.
//! - [`training`]: the multislice loss, Adam, progressive-in-time schedule,
//!   and the V-SToRM/G-SToRM mode matrix.
//! - [`evaluation`]: reconstruction quality, latent-distribution agreement,
//!   cross-excitation, phase-alignment metrics.
//! - [`container`], [`config`], [`checkpoint`], [`pipeline`]: persistence and
//!   orchestration behind the CLI.

pub mod container;
pub mod encoding;
pub mod error;
pub mod generator;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod types;
pub mod variational;

pub use error::{CoreError, Result};
pub use types::{Grid, ImageSeries, Slice2D, Volume3D};
