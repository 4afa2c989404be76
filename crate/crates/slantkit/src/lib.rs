//! Numerical analysis of slant-type distributions on manifolds carrying a
//! compatible structural endomorphism.

pub mod error;
pub mod classifier;
pub mod connection;
pub mod distribution;
pub mod duality;
pub mod expr;
pub mod gallery;
pub mod linalg;
pub mod manifest;
pub mod report;
pub mod sampling;
pub mod spec;
pub mod structure;
pub mod tolerances;
pub mod verifier;

pub use error::{Error, Result};
