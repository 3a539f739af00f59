//! Approximate counting and sampling for low-temperature lattice spin systems
//! via polymer and contour models and truncated cluster expansions. Every
//! routine has a brute-force counterpart for verification.

pub mod app;
pub mod cache;
pub mod cluster;
pub mod contour;
pub mod error;
pub mod graph;
pub mod lattice;
pub mod oracle;
pub mod polymer;
pub mod sampling;
pub mod scalar;
pub mod series;
pub mod spin;
pub mod torus;
pub mod trees;
pub mod ursell;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Coeff, Rational};
pub use series::{ExactSeries, FloatSeries, TruncatedSeries};
