//! Spectral geometry on the sphere and the projective plane: Laplace spectra
//! of conformal metrics, spectral and energy indices of harmonic maps into
//! round spheres, exact verification of the index inequalities, and
//! degenerating metric families approaching the isoperimetric eigenvalue
//! bounds.

pub mod arithmetic;
pub mod config;
pub mod eigensolve;
pub mod error;
pub mod fem;
pub mod index;
pub mod jet;
pub mod maps;
pub mod mesh;
pub mod optimize;
pub mod report;
pub mod sequence;
pub mod sparse;

pub use error::{Error, Result};
