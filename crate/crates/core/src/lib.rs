//! Equi-affine distance functions on planar convex domains.

pub mod error;
pub mod estimate;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod levels;
pub mod moduli;
pub mod tropical;

pub use error::{Error, Result};
