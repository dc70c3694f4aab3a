//! Belief-propagation track-before-detect for superpositional intensity images.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece of the
//! tracker: the statistical models, the particle-based message passing engine, a
//! scenario simulator and the GOSPA evaluation metric. File formats, configuration
//! and the command line live in the companion `tbd-bp` crate.
//!
//! A single tracking step looks like this:
//!
//! ```
//! use rand::SeedableRng;
//! use tbd_core::engine::{EngineConfig, Tracker};
//! use tbd_core::models::{BirthModel, GaussianPsf, Models, MotionModel};
//! use tbd_core::state::{GridGeometry, MeasurementImage};
//!
//! let geometry = GridGeometry::square(8, 1.0);
//! let psf = GaussianPsf::<2>::isotropic(0.5, 1.0).unwrap();
//! let models = Models {
//!     motion: MotionModel::new(1e-3, 1e-4, 1.0, 0.999).unwrap(),
//!     birth: BirthModel::new(1e-5, 120.0, 1e-2, 6.725).unwrap(),
//!     psf,
//! };
//! let config = EngineConfig { particles_per_po: 200, ..EngineConfig::default() };
//! let mut tracker = Tracker::new(models, config);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let image = MeasurementImage::zeros(geometry, 2);
//! let estimates = tracker.step(&image, &mut rng).unwrap();
//! assert!(estimates.is_empty());
//! ```

#![no_std]

extern crate alloc;

pub mod engine;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod models;
pub mod particles;
pub mod simulator;
pub mod state;

pub use error::{Error, Result};
