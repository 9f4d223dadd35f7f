pub mod channel;
pub mod dsp;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod rng;
pub mod scenario;
pub mod signals;

pub use error::{Error, Result};
