//! Numerical laboratory for McKean-Vlasov dynamics with hitting-time
//! feedback.
//!
//! Two dynamics are covered. With linear feedback a particle moves as
//! `X = X0 + B - α P(τ ≤ t)` and its density solves a free-boundary
//! Fokker-Planck equation; with logarithmic feedback
//! `X = X0 + βt + B + α log P(τ > t)` and the density solves a non-local one.
//! The crate provides finite-difference solvers for both equations
//! ([`fp_linear`], [`fp_log`]), exact self-similar oracles ([`selfsim`]),
//! the explicit blow-up and global-existence criteria ([`criteria`]) and a
//! reproducible interacting particle simulation ([`particles`]).
//!
//! Everything is generic over [`Real`]; the `f64` aliases below are what the
//! command-line front end uses.

// `!(x > 0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod fp_linear;
pub mod fp_log;
pub mod model;
pub mod num;
pub mod output;
pub mod particles;
pub mod quad;
pub mod rng;
mod scheme;
pub mod selfsim;
pub mod series;
mod tridiag;

pub use error::{Error, Result};
pub use model::{Density, Feedback, ModelParams};
pub use num::Real;
pub use scheme::{BlowupEvent, Trigger};
pub use series::TimeSeries;

pub type Params = model::ModelParams<f64>;
pub type Density64 = model::Density<f64>;
pub type Series = series::TimeSeries<f64>;
pub type SelfSimilar = selfsim::SelfSimilar<f64>;
pub type Verdict = criteria::Verdict<f64>;
pub type GridConfig = fp_linear::GridConfig<f64>;
pub type LogSolution = fp_log::LogSolution<f64>;
pub type ParticleEnsemble = particles::ParticleEnsemble<f64>;
pub type EntropyKit = fp_log::EntropyKit<f64>;
pub type LinearSolution = fp_linear::LinearSolution<f64>;
