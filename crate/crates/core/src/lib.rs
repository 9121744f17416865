//! Transfer operators of expanding and piecewise expanding maps.
//!
//! The crate applies transfer operators to grid densities, discretizes them
//! with Ulam's method, checks Lasota-Yorke inequalities, measures mixing
//! rates, stability and linear response, and models a solenoidal skew
//! product with a contracted one-dimensional fiber.

pub mod cli;
pub mod density;
mod error;
pub mod io;
pub mod lyverify;
pub mod maps;
pub mod response;
pub mod rng;
pub mod solenoid;
pub mod stats;
pub mod transfer;
pub mod ulam;

pub use density::{GridDensity, NormReport, Topology};
pub use error::{Error, Result};
pub use maps::{KellerParams, MapSpec, PerturbationFamily, PiecewiseExpandingMap, SmoothCircleMap};
pub use transfer::TransferContext;
pub use ulam::{CellVector, UlamOperator};
