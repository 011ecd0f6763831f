//! Local distance-preserving auto-encoders and VAEs trained with
//! continuous k-nearest-neighbour (CkNN) graphs and Lagrange multipliers.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar type for the common 64-bit case.

pub mod datasets;
pub mod diffmath;
pub mod error;
pub mod graphs;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = diffmath::Matrix<f64>;
pub type Matrix32 = diffmath::Matrix<f32>;
pub type Tape64 = diffmath::Tape<f64>;
pub type ParamStore64 = diffmath::ParamStore<f64>;
