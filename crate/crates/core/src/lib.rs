//! Numerical toolkit for conic Kähler metrics along a smooth divisor.

pub mod background;
pub mod cone_charts;
pub mod cone_poisson;
pub mod curvature;
pub mod error;
pub mod glue_max;
pub mod grid;
pub mod harness;
pub mod numerics;
pub mod weighted_holder;

pub use error::{ConeError, Result};
