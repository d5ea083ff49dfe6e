//! Hashing recommender that propagates Hamming-space similarity over the
//! user-item graph and ranks with bit-packed XOR/popcount scans.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod hamming;
pub mod io;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type MatrixF32 = matrix::Matrix<f32>;
pub type MatrixF64 = matrix::Matrix<f64>;
pub type CodeMatrixF32 = hamming::CodeMatrix<f32>;
pub type CodeMatrixF64 = hamming::CodeMatrix<f64>;
pub type ModelParamsF32 = model::ModelParams<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type ForwardTraceF32 = model::ForwardTrace<f32>;
pub type ForwardTraceF64 = model::ForwardTrace<f64>;
pub type TrainerF32<'a> = training::Trainer<'a, f32>;
pub type TrainerF64<'a> = training::Trainer<'a, f64>;
