pub mod data;
pub mod dtml;
pub mod error;
pub mod latlrr;
pub mod linalg;
pub mod projector;
pub mod pipeline;

pub use error::{Error, Result};
