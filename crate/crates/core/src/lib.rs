//! Interacting random walk loop soups and the random path model.

pub mod cli;
pub mod error;
pub mod ewens;
pub mod graphs;
pub mod estimators;
pub mod loops;
pub mod mcmc;
pub mod numeric;
pub mod rpm;
pub mod rwls_exact;
pub mod threshold;
pub mod weights;

pub use error::{Error, Result};
