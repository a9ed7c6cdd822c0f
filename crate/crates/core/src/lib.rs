//! Proxy targeted attacks on cross-modal embedding alignment.
//!
//! The crate is split along the life of an experiment:
//!
//! - [`numerics`]: embeddings, cosine/L2 geometry, population statistics, quantiles.
//! - [`synthworld`]: a differentiable toy source encoder plus clustered target-modal
//!   embeddings with a controllable modality gap.
//! - [`attack`]: the proxy objective, its single-target and same-modal baselines, and
//!   the PGD / Square Attack optimizers.
//! - [`detect`]: kNN, LOF, Isolation Forest and PCA anomaly scorers and the
//!   quantile outlier filter.
//! - [`eval`]: zero-shot classification, retrieval, success-rate metrics and gallery
//!   poisoning.
//! - [`theory`]: executable checks of the generalizability/undetectability trade-off and
//!   of the convex-polytope similarity bounds.

pub mod attack;
pub mod detect;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod rng;
pub mod synthworld;
pub mod theory;

pub use error::{Error, Result};
pub use numerics::{Embedding, EmbeddingSet};
