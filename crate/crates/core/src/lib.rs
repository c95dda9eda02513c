//! Simulation and exact analysis of conditioned multimode twin beams.
//!
//! A thermal twin-beam source feeds a weak tap on both beams; pulses are kept
//! only when the tap count falls inside a window around its mean. The crate
//! provides the Monte Carlo chain ([`montecarlo`]), sample estimators with
//! bootstrap errors ([`estimators`]), closed forms ([`analytic`], [`specfun`])
//! and an exact truncated enumeration of the same chain ([`oracle`]).
//!
//! The numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common double-precision instantiations.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod estimators;
pub mod montecarlo;
pub mod oracle;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod specfun;

pub use config::{
    validate, ChannelConfig, ConditionWindow, ConfigError, Moments, SourceConfig, SubtractionSpec,
    ValidatedConfig,
};
pub use scalar::Real;

pub type Moments64 = Moments<f64>;
pub type SeriesResult64 = specfun::SeriesResult<f64>;
pub type ModalStatistics64 = analytic::ModalStatistics<f64>;
pub type FitResult64 = estimators::FitResult<f64>;
pub type GainFit64 = estimators::GainFit<f64>;
pub type JointPmf64 = oracle::JointPmf<f64>;
