//! Style descriptors for online handwriting.

pub mod applications;
pub mod data;
pub mod error;
pub mod model;
pub mod numeric;
pub mod render;
pub mod segmentation;
pub mod training;

pub use error::{DsdError, Result};
