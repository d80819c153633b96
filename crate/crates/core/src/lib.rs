//! Numerical toolkit for the heat semigroup, Riesz transform and Hardy
//! space of one-dimensional Schrödinger operators `-d²/dx² + V`, `V ≥ 0`.

pub mod cache;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod harness;
pub mod hardy;
pub mod report;
pub mod riesz;
pub mod sampling;
pub mod semigroup;
pub mod special;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, Interval};
pub use report::{Report, Table};
pub use semigroup::{Potential, PotentialSpec, SpectralOperator};
