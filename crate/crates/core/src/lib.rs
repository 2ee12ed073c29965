//! Toolkit for studying representation degeneration in tied-embedding
//! language models: a toy model with hand-written gradients, the cosine
//! regularizer, embedding-geometry diagnostics and numerical checks of the
//! underlying geometric arguments.

pub mod cli;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod numerics;
pub mod regularizer;
pub mod theory;

pub use error::{Error, Result};
