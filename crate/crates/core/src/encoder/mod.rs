//! Contextual encoder: word-piece vocabulary and a small transformer.

mod transformer;
pub mod vocab;

pub use transformer::{Encoder, EncoderConfig, PackedSequence, PACKING_OVERHEAD};
pub use vocab::{tokenize_sequence, TokenizedSequence, Vocab};
