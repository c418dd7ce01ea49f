//! Raw-domain multipath background tracking with an extended Kalman filter,
//! marginal-likelihood hyperparameter learning, nested-model significance
//! tests and sequential target detection.
//!
//! The numerical core is generic over the scalar type; the aliases below fix
//! it to `f64` or `f32`.

// NaN inputs must fail the parameter checks, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detect;
pub mod error;
pub mod harness;
pub mod learn;
pub mod oceansim;
pub mod scalar;
pub mod signals;
pub mod tracker;

pub use channel::CovarianceModelKind;
pub use error::{Error, Result};
pub use scalar::Real;

pub type MeasurementModelF64 = tracker::MeasurementModel<f64>;
pub type MeasurementModelF32 = tracker::MeasurementModel<f32>;
pub type FilterStateF64 = tracker::FilterState<f64>;
pub type FilterStateF32 = tracker::FilterState<f32>;
pub type PingRecordF64 = tracker::PingRecord<f64>;
pub type PingRecordF32 = tracker::PingRecord<f32>;
pub type HyperparamsF64 = channel::Hyperparams<f64>;
pub type HyperparamsF32 = channel::Hyperparams<f32>;
pub type ChannelBasisF64 = channel::ChannelBasis<f64>;
pub type ChannelBasisF32 = channel::ChannelBasis<f32>;
pub type ConvolutionOperatorF64 = signals::ConvolutionOperator<f64>;
pub type ConvolutionOperatorF32 = signals::ConvolutionOperator<f32>;
