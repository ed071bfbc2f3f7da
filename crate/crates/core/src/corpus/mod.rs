//! Dataset readers and writers: CoNLL-2012 coreference, GAP and SQuAD-style QA.

mod conll;
mod gap;
mod qa;
pub mod text;

pub use conll::{parse_conll, parse_conll_str, write_conll, write_conll_string};
pub use gap::{
    gap_to_document, parse_gap, parse_gap_predictions, parse_gap_str, write_gap_predictions, write_gap_string,
    GapCandidate, GapDocument, GapExample, Gender,
};
pub use qa::{parse_qa, parse_qa_str, write_qa_string, QaExample};
pub use text::CharSpan;
