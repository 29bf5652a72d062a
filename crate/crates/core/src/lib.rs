//! Observer-dependent classification with oscillator Hilbert spaces.

pub mod encoding;
pub mod error;
pub mod fixtures;
pub mod icm;
pub mod lindblad;
pub mod linalg;
pub mod measurement;
pub mod oracle;
pub mod povm;
pub mod scenario;
pub mod strategy;
pub mod templates;

pub use error::{Error, Result};
