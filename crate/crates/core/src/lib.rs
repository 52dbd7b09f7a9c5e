pub mod algebra;
pub mod cocycle;
pub mod conjugacy;
pub mod entropy;
pub mod error;
pub mod foliation;
pub mod linalg;
pub mod maps;
pub mod skew;
pub mod stats;

pub use error::{Error, Result};
