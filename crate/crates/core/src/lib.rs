//! Model-assisted auditing of single-annotator dialog corpora.
//!
//! Questions that share a semantic label should be paraphrases of each
//! other. [`pairs`] expands a labeled corpus into every ordered question
//! pair with a gold bit from label equality, a [`classifier`] backend
//! predicts on those pairs, [`eval`] scores it and pulls out the pairs where
//! model and annotation disagree, and [`triage`] turns human verdicts on
//! those disagreements into corpus revisions for the next round.

pub mod classifier;
pub mod corpus;
pub mod eval;
pub mod pairs;
pub mod triage;

mod bit;

pub use corpus::{AnnotatedQuestion, AnnotationLabel, Corpus, CorpusError};
pub use pairs::{PairDataset, PairInstance, Split, SplitSpec};
