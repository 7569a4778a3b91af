//! Three point compressors for communication-efficient distributed training.
//!
//! The crate simulates `n` workers running gradient descent with compressed
//! uplink messages. A [`MethodSpec`] picks the compression mechanism, a
//! [`problems::Problem`] supplies the local gradients and
//! [`engine::run`] drives the rounds.

pub mod compressors;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod theory;
pub mod threepc;
pub mod vector;

pub use compressors::CompressorSpec;
pub use engine::{run, RunConfig, RunOutput, RunRecord, Termination};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use theory::{SmoothnessConstants, TheoryParams};
pub use threepc::{MechanismState, MethodSpec, StepCtx, StepResult};
pub use vector::DenseVector;
