//! Coverless image steganography: a secret image is mapped through a
//! deterministic DDIM noise space into an unrelated-looking container, and
//! the conditions needed to invert that mapping travel inside the container
//! by reversible histogram shifting, keyed by a chaotic map and sealed with
//! an SM3 digest.

pub mod chaos;
pub mod ddim;
pub mod error;
pub mod integrity;
pub mod pipeline;
pub mod raster;
pub mod rdh;

pub use error::{Error, Result};
