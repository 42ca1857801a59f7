//! Realized covariation estimation for term-structure panels with jump truncation.

pub mod covariation;
pub mod csv_io;
pub mod curve_panel;
pub mod error;
pub mod harness;
pub mod kernel_space;
pub mod linalg;
pub mod simulator;
pub mod truncation;

pub use error::{Error, Result};
