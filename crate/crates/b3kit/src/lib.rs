#![forbid(unsafe_code)]
// Numerical kernels here walk several parallel buffers by index; iterator
// chains over four zipped slices read worse than the explicit loops.
#![allow(clippy::needless_range_loop)]

//! Numerical core for precision-weighted posterior bridge fusion.
//!
//! The library provides dense field tensors with deterministic seeded
//! randomness and bit-exact serialization, the three decoder operators
//! (precision field estimation, closed-form posterior bridge fusion,
//! contractive dispatch), the multi-stage propagation loop that chains them,
//! dense-prediction metrics with multi-task transfer gains, a synthetic
//! heteroscedastic benchmark with known oracle precisions, and randomized
//! verification suites with independent numerical oracles.

pub mod cdo;
pub mod decoder;
pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod pbo;
pub mod pfe;
pub mod rng;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use field::{BinOp, FieldTensor, PrecisionField, ScalarField};
pub use rng::RngStream;
