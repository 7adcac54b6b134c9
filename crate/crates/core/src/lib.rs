//! Recursive Bayesian fusion of high- and low-resolution satellite image
//! sequences: a Kalman filter and RTS smoother over a pixel state vector with
//! a block-diagonal covariance, process noise calibrated from a historical
//! archive, and water-mapping evaluation of the fused series.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod downstream;
pub mod error;
pub mod fusion;
pub mod observation;
pub mod qcal;
pub mod raster;
pub mod scalar;
pub mod synth;

pub use error::{ErrorKind, FusionError, Result};
pub use scalar::Scalar;

pub type Raster = raster::RasterImage<f64>;
pub type Raster32 = raster::RasterImage<f32>;
pub type Belief = fusion::StateBelief<f64>;
pub type Belief32 = fusion::StateBelief<f32>;
pub type Modality = observation::ModalityModel<f64>;
pub type Modality32 = observation::ModalityModel<f32>;
pub type Timeline = fusion::FusionTimeline<f64>;
pub type Timeline32 = fusion::FusionTimeline<f32>;
