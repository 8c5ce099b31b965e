//! Edge sign prediction for directed signed networks.
//!
//! The crate bundles a signed-graph model, a parser for the wiki-RfA vote
//! dump, a small probabilistic-soft-logic engine, three predictors (balance
//! triads, latent node properties, comment sentiment) and the evaluation
//! harness used to compare them.

pub mod eval;
pub mod graph;
pub mod ingest;
pub mod latent;
pub mod psl;
pub mod sentiment;
pub mod synth;
pub mod triadic;

use thiserror::Error;

pub use graph::{NodeId, Sign, SignedEdge, SignedNetwork};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Psl(#[from] psl::PslError),
    #[error(transparent)]
    Sentiment(#[from] sentiment::SentimentError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("training network has no edges")]
    EmptyTraining,
    #[error("{0}")]
    Invalid(String),
}
