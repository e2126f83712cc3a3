//! Hierarchical steering-angle prediction: a worker network maps frame
//! sequences to angles while a manager supplies subroutine identifiers that
//! tell the worker which maneuver it is inside. Includes the tape-based
//! autodiff engine, exact t-SNE + k-means subroutine discovery, synthetic
//! data generation, training/evaluation drivers, and plotting.

pub mod autodiff;
pub mod data;
pub mod embed;
pub mod error;
pub mod nn;
pub mod plot;
pub mod runconfig;
pub mod train;

pub use error::{Error, Result};
