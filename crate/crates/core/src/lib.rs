//! Numerical laboratory for annulus maps: lifted maps, attractor covers, rotation
//! intervals, rotational horseshoes and entropy brackets.

pub mod attractor;
pub mod cover;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod horseshoe;
pub mod linalg;
pub mod maps;
pub mod profile;
pub mod rotation;
pub mod scalar;
pub mod theorem_b;

pub use cover::{displacement, lift_near, project, AnnulusPoint, Band, CoverPoint, DeckShift};
pub use error::{Error, Result};
pub use grid::{Connectivity, GridSet};
pub use linalg::Mat2;
pub use maps::LiftedMap;
pub use scalar::Scalar;

pub type Map64 = LiftedMap<f64>;
pub type Map32 = LiftedMap<f32>;
pub type Point64 = AnnulusPoint<f64>;
pub type Point32 = AnnulusPoint<f32>;
pub type Lift64 = CoverPoint<f64>;
pub type Lift32 = CoverPoint<f32>;
