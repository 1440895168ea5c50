//! Vector Allen-Cahn type systems `-Lap u = eps^-2 grad V(u)` on planar
//! domains, with energy, stress and concentration diagnostics.

pub mod boundary;
pub mod cli;
pub mod clearing;
pub mod concentration;
pub mod contour;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod levelsets;
pub mod linalg;
pub mod par;
pub mod potential;
pub mod raster;
pub mod report;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
