//! Energy-efficiency optimization for rate-splitting, semantic-compression
//! downlinks over indoor visible-light networks.

pub mod alternating;
pub mod benchmarks;
pub mod config;
pub mod dinkelbach;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod plot;
pub mod sca;
pub mod semantics;

pub use error::{Error, Result};
