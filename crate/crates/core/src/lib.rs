//! Continued fractions, Brjuno and Perez-Marco series, logarithmic-type
//! capacity kernels and discrete capacity / Hausdorff gauge estimators.

pub mod capacity;
pub mod constructions;
pub mod contfrac;
pub mod error;
pub mod kernels;
pub mod measures;
pub mod real;
pub mod summation;
pub mod sums;
pub mod tower;

pub use error::{Error, Result};
