//! Learns and serves "semantic capacity" scores for domain terms.
//!
//! The offline pipeline streams a corpus, counts windowed term
//! co-occurrences, converts them to NPMI association weights, and embeds the
//! terms on the hyperboloid model of hyperbolic space with a weighted
//! negative-sampling loss. The reciprocal Poincaré norm of a term's
//! embedding is its capacity score: terms with broad meaning scope sit near
//! the ball origin. An online path embeds unseen terms against the frozen
//! offline table, and an evaluation harness scores reports against
//! hypernym-hyponym ground truth.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod manifold;
pub mod query;
pub mod stats;
pub mod training;

pub use corpus::{CooccurrenceCounts, CorpusDocument, TermId, Vocabulary};
pub use error::{Error, Result};
pub use eval::CapacityReport;
pub use manifold::{LorentzPoint, PoincarePoint, TangentVector};
pub use stats::{AssociationSet, WeightScheme};
pub use training::{EmbeddingTable, Space, TrainConfig};
