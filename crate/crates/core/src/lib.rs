//! Sequential A-optimal experimental design for X-ray tomography with a
//! smoothed total-variation prior.
//!
//! The reconstruction lives on a fine grid and is computed by lagged
//! diffusivity; design selection runs on a coarse grid where dense posterior
//! covariances are affordable.

pub mod design;
pub mod error;
pub mod grid;
pub mod harness;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod prior;
pub mod projector;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Point};
