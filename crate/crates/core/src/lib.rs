//! Numerical toolkit for sign-changing bubble towers on punctured domains:
//! bubble fields, the parameter family and its kernel, Green's functions,
//! projections, energy expansions and the reduced two-tower functional.

pub mod energy;
pub mod error;
pub mod family;
pub mod fields;
pub mod greens;
pub mod grid;
pub mod harmonic;
pub mod kernel;
pub mod par;
pub mod projection;
pub mod quadrature;
pub mod reduced;

pub use error::{Error, Result};
