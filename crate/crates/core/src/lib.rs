//! Local differential privacy frequency oracles (GRR, OUE, OLH), poisoning
//! attacks against them, and recovery of genuine frequencies from poisoned
//! aggregates.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). Most callers
//! want the `f64` aliases re-exported at the crate root, e.g. [`Frequencies`]
//! and [`Params`].

pub mod attack;
pub mod domain;
pub mod error;
pub mod eval;
pub mod ldp;
pub mod recover;
pub mod scalar;

pub use domain::{Dataset, FrequencyVector, ItemDomain, RngSeed};
pub use error::{Error, Result};
pub use ldp::{AggregateEstimate, PerturbParams, Protocol, Report};
pub use recover::{Knowledge, RecoveryConfig, RecoveryResult};
pub use scalar::Scalar;

/// Double-precision frequency vector, the default throughout the harness.
pub type Frequencies = FrequencyVector<f64>;
/// Single-precision frequency vector.
pub type Frequencies32 = FrequencyVector<f32>;
pub type Params = PerturbParams<f64>;
pub type Params32 = PerturbParams<f32>;
pub type Recovery = RecoveryResult<f64>;
pub type Recovery32 = RecoveryResult<f32>;
pub type Config = RecoveryConfig<f64>;
