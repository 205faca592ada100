//! Numerical laboratory for local logarithmic Sobolev inequalities, the
//! Schrödinger problem and its finite-dimensional toy model.

pub mod bridge;
pub mod error;
pub mod grid;
pub mod local;
pub mod numerics;
pub mod report;
pub mod runner;
pub mod toy;

pub use error::{Error, Result};
