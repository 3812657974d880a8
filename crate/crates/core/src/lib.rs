//! Exit-time distribution and moments of piecewise-deterministic Markov processes
//! via optimal quantization of the embedded jump chain.
//!
//! The crate is organised bottom-up:
//!
//! * [`point`], [`model`], [`skeleton`]: hybrid state space, the model contract and
//!   simulation of the post-jump chain `(Z_k, T_k)`.
//! * [`quantization`]: marginal CLVQ grids with companion weights and transitions.
//! * [`exit`]: recursive estimators, the Monte Carlo oracle, horizon selection and
//!   error-bound evaluators.
//! * [`models`]: the Poisson and corrosion examples, the killed-process wrapper and a
//!   finite toy chain.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exit;
pub mod model;
pub mod models;
pub mod numeric;
pub mod point;
pub mod quantization;
pub mod rng;
pub mod skeleton;

pub use error::{Error, Result};
pub use model::{BoundConstants, PdmpModel, TargetSet};
pub use point::{hybrid_distance, HybridPoint, Mode};
pub use quantization::{GridPoint, QuantizedChain};
pub use rng::{Purpose, StreamFactory};
pub use skeleton::{exit_time_of_path, simulate_skeleton, SkeletonPath};
