//! Set matching on per-fixed bipartite hypergraphs: data model, samplers,
//! graph and embedding baselines, attention scorers and the training loop.

pub mod baselines;
pub mod embeddings;
pub mod error;
pub mod hypergraph;
pub mod models;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
