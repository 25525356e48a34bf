//! Dense associative memory in raw and encoded spaces.
//!
//! The crate is organised around an immutable [`MemoryBank`] of stored
//! patterns. Retrieval runs either the log-sum-exp Hopfield recurrence
//! ([`hopfield`]) or the kernel memory update with a pseudoinverse
//! ([`kernel`]). Patterns may first pass through a [`codec::Codec`], in
//! which case retrieval happens in latent space and the result is decoded
//! afterwards. [`hetero`] builds concatenated image/text memories for
//! cross-modal lookup, and [`metrics`] holds the evaluation instruments.

pub mod bank;
pub mod codec;
pub mod error;
pub mod fixtures;
pub mod henb;
pub mod hetero;
pub mod hopfield;
pub mod image;
pub mod kernel;
pub mod linalg;
pub mod metrics;

pub use bank::{MemoryBank, StateVector};
pub use codec::{Codec, EmbeddingTable};
pub use error::{HenError, Result};
pub use hopfield::{EnergyParams, RetrievalResult, Similarity, TransformerParams};
pub use image::Image;
pub use kernel::{KernelMatrix, KernelMemory, KernelParams};
