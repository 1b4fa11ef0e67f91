pub mod diff;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod impact;
pub mod index;
pub mod lexicon;
pub mod probe;
pub mod reranker;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
