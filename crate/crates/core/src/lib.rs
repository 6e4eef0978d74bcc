pub mod ambient;
pub mod conformal;
pub mod error;
pub mod fg;
pub mod geometry;
pub mod jet;
pub mod suites;
pub mod volume;
pub mod zoo;

pub use error::{Error, Result};
