//! Learning-to-rank toolkit for two-stage retrieval over precomputed
//! embeddings: a bilinear yes/no-logit scorer, a composite pairwise,
//! teacher-distillation and pointwise objective, teacher-guided negative
//! mining, AdamW training, and evaluation and score diagnostics.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod mining;
pub mod objectives;
pub mod scorer;
pub mod synth;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};

/// Toolkit version embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
