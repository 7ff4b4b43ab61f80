//! Minimal neural-network runtime: reverse-mode autodiff on a tape, a small
//! transformer, a word-level tokenizer and an AdamW optimizer.

pub mod optim;
pub mod params;
pub mod tape;
pub mod tokenizer;
pub mod transformer;

pub use params::{ParamId, ParamStore};
pub use tape::{Mat, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
