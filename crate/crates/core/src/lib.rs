//! Simulation and analytics for non-homogeneous generalized Skellam
//! processes `S(t) = Σ_i i N_i(t)`: exact sampling, generating functions and
//! moments, jump decompositions, first-passage times, fractional integrals of
//! paths, and Bernstein/Caputo fractional variants.
//!
//! Analytic code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar. Samplers draw in `f64`.

pub mod asymptotics;
pub mod decomposition;
pub mod error;
pub mod first_passage;
pub mod frac_integral;
pub mod frac_skellam;
pub mod genfn;
pub mod law;
pub mod numeric;
pub mod rates;
pub mod sampling;
mod scalar;
pub mod special;
pub mod stats;
pub mod subordination;

/// Library version, embedded in artifact metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use frac_skellam::{CaputoLaw, FracJump, FracLaw};
pub use genfn::{Domain, GenFn};
pub use law::{
    classic_skellam_pmf, CorrelationDecay, FisherIndex, Jump, JumpLaw, MomentSet, PmfTable,
};
pub use rates::{RateFn, RateSpec, ShiftedRateFn};
pub use sampling::{Event, NhppMethod, Path, RngStream};
pub use scalar::Scalar;
pub use subordination::{BernsteinFn, BernsteinSpec};

pub type RateFn64 = RateFn<f64>;
pub type RateFn32 = RateFn<f32>;
pub type JumpLaw64 = JumpLaw<f64>;
pub type JumpLaw32 = JumpLaw<f32>;
pub type Path64 = Path<f64>;
pub type Path32 = Path<f32>;
pub type GenFn64 = GenFn<f64>;
pub type GenFn32 = GenFn<f32>;
pub type BernsteinFn64 = BernsteinFn<f64>;
pub type BernsteinFn32 = BernsteinFn<f32>;
pub type FracLaw64 = FracLaw<f64>;
pub type FracLaw32 = FracLaw<f32>;
