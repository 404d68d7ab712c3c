//! Search for Hadamard matrices of Goethals-Seidel type.
//!
//! The crate scores arrays through their Fourier spectrum, improves them with
//! local search and parallel tempering, deduplicates them under the residual
//! symmetry group, and trains a small autoregressive transformer on the best
//! candidates to propose new ones.

pub mod enumerate;
pub mod error;
pub mod gs;
pub mod model;
pub mod par;
pub mod rng;
pub mod run;
pub mod search;
pub mod symmetry;

pub use error::{Error, Result};
pub use gs::{GsArray, Score, SegmentSums, SignMatrix, Spectrum};
pub use par::Exec;
