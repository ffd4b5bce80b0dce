//! Sigmoid contrastive representation learning lab.
//!
//! Core pieces: a pairwise sigmoid contrastive loss with learnable bias and
//! exact analytic gradients, an NT-Xent softmax baseline, a simulated
//! device-sharded chunked loss with verified equivalence and memory
//! accounting, a small MLP encoder/projector with hand-written backward,
//! LARS with warmup + cosine annealing, a two-view augmentation pipeline
//! over CIFAR-10 binaries or synthetic clusters, and a linear-probe
//! evaluation protocol. Everything is seeded and deterministic: identical
//! configs and seeds reproduce runs byte-for-byte.

pub mod checkpoint;
pub mod checks;
pub mod chunked;
pub mod config;
pub mod data;
pub mod error;
pub mod kernel;
pub mod loss;
pub mod model;
pub mod optim;
pub mod probe;
pub mod streams;
pub mod train;

pub use error::{Error, Result};
