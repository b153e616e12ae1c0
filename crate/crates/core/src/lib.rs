//! Numerical machinery for sparse-domination Schauder estimates on cubes.

pub mod error;
pub mod field;
pub mod grid;
pub mod iterate;
pub mod maximal;
pub mod norms;
pub mod sparse;
pub mod solver;

pub use error::{Error, Result};
pub use field::{CoefficientField, Field, FieldKind, GridSpec, Source};
pub use grid::Cube;
