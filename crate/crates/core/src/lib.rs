//! A deterministic distributed-SGD simulator built around sparse
//! communication with majority voting.
//!
//! Workers train small closed-form models with local SGD and exchange
//! sparsified model differences with a parameter server. The crate provides:
//!
//! - consensus sparsity masks via vote tallies, with deterministic top-K,
//!   random weighted, and incremental add-drop selection;
//! - per-worker error feedback over the untransmitted update mass;
//! - bit-exact wire codecs: a block position format for sparse supports and a
//!   fractional (geometric-interval) value quantizer;
//! - a communication ledger metering every encoded bit per round and
//!   direction, plus the closed-form budget arithmetic it is checked against;
//! - a config-file driven experiment runner emitting per-round CSV metrics.
//!
//! Numerical code is generic over the scalar type (`f32`/`f64`); the
//! simulator binary runs `f32`, matching the 32-bit wire format.

pub mod accounting;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod local;
pub mod model;
pub mod protocol;
pub mod scalar;
pub mod schedule;
pub mod sparsify;
pub mod vector;
pub mod voting;

pub use accounting::{analytic_budget, Budget};
pub use codec::{BitStream, QuantizedBlock};
pub use config::ExperimentConfig;
pub use data::{make_synthetic_regression, shard_iid, Dataset, Shard};
pub use error::{Error, Result};
pub use experiment::{run_experiment, SimRun, Summary};
pub use model::{Model, ModelKind, ModelShape};
pub use protocol::{CommLedger, RoundReport, Scheme, ServerState, WorkerState};
pub use scalar::Scalar;
pub use schedule::LrSchedule;
pub use sparsify::{ErrorAccumulator, SparseMask, SparseUpdate};
pub use vector::DenseVector;
pub use voting::{AddDrop, VoteCount};

/// Scalar type the simulator binary runs with.
pub type SimScalar = f32;

pub type DenseVector32 = vector::DenseVector<f32>;
pub type DenseVector64 = vector::DenseVector<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type SparseUpdate32 = sparsify::SparseUpdate<f32>;
pub type SparseUpdate64 = sparsify::SparseUpdate<f64>;
pub type QuantizedBlock32 = codec::QuantizedBlock<f32>;
pub type QuantizedBlock64 = codec::QuantizedBlock<f64>;
