//! Cross-modal text-to-image retrieval over precomputed embeddings.
//!
//! The pipeline has five stages, each usable on its own:
//!
//! - [`store`]: embedding datasets on disk, normalization, validation and a
//!   seeded synthetic benchmark generator.
//! - [`similarity`]: exact cosine similarity and deterministic top-k search.
//! - [`objective`]: in-batch contrastive and hard-negative match losses with
//!   analytical gradients, and a linear adapter trained with them.
//! - [`sca`]: similarity coverage analysis, which resolves queries that
//!   retrieve the same answer by advancing the less confident one.
//! - [`eval`]: Recall@k reports and before/after comparisons.
//!
//! [`assignment`] holds the optimal one-to-one matching used as an upper
//! bound for conflict resolution, and [`cli`] wires everything into the
//! `tpas` binary.

pub mod assignment;
pub mod cli;
pub mod error;
pub mod eval;
pub mod objective;
pub mod sca;
pub mod similarity;
pub mod store;
pub mod text;

pub use error::{Error, Result};
