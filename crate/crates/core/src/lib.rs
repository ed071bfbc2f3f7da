//! Coreference resolution as query-based span prediction.

pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod layout;
pub mod linking;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod proposal;
pub mod qa_pretrain;
pub mod synthetic;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{ClusterSet, Document, Span, Token};
