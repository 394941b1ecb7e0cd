//! Universal autoencoder framework for MIMO CSI feedback.
//!
//! One encoder, any configuration: CSI tensors of arbitrary antenna counts
//! are partitioned into single-antenna-pair slices, zero-padded to one of
//! five transform sizes, and moved to the delay domain, so a single model
//! per category covers every resource-block allocation. Multiple
//! compression ratios come from an ordered latent space: a masking layer
//! keeps the first `lambda` latent entries and zeroes the rest, and the
//! training schedule makes earlier entries carry more information.
//!
//! The crate contains the full experimental stack: channel synthesis
//! ([`channelgen`]), the delay-domain pipeline ([`pipeline`]), dense
//! networks with explicit backpropagation ([`neural`]), the three
//! multi-rate architectures ([`models`]), training ([`training`]),
//! evaluation and benchmarks ([`evalbench`]), and the `unicsi` CLI
//! ([`cli`]).

pub mod channelgen;
pub mod cli;
pub mod error;
pub mod evalbench;
pub mod models;
pub mod neural;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
