pub mod classifiers;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod image;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
