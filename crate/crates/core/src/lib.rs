//! Classical and quantum correlations between environmental bands of a
//! periodically driven quantum Brownian motion machine.

mod error;
pub mod bands;
pub mod gaussian;
pub mod green;
pub mod oracle;
pub mod sweep;

pub use error::{Error, Result};
