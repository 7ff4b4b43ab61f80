//! Core building blocks for self-supervised contrastive fine-tuning of
//! citation classifiers.
//!
//! The crate is deliberately free of any neural-network runtime: it covers
//! corpus handling, keyphrase extraction and bookkeeping, the two positive-pair
//! generators (sentence-level cropping and keyphrase perturbation), the
//! reference numerics of the adapter/classifier/contrastive head, and the
//! evaluation tooling. The trainer and the backbone live in `citss-train`.

pub mod augment;
pub mod client;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod head;
pub mod label;
pub mod rng;
pub mod stk;
pub mod synonyms;
pub mod synthetic;

pub use error::{Error, Result};
pub use label::Label;

/// The normalized citation anchor. Exactly one occurrence marks the target
/// citation inside the citance.
pub const CITATION_TAG: &str = "#CITATION_TAG";
