//! Finite-volume simulation of compartment populations structured by size and content.

pub mod analysis;
pub mod coagulation;
pub mod error;
pub mod grid;
pub mod rates;
pub mod scenarios;
pub mod stepper;

pub use error::{Error, Result};
