//! semweave learns ranked semantic models for structured data sources:
//! given a domain ontology, previously modeled sources, and sample data,
//! it predicts each attribute's semantic types, merges the known models
//! into a weighted alignment graph, beam-searches attribute-to-graph
//! mappings, and ranks top-k Steiner trees into candidate models.

pub mod error;
pub mod eval;
pub mod graph;
pub mod labeling;
pub mod mapping;
pub mod model;
pub mod ontology;
pub mod pipeline;
pub mod steiner;

pub use error::{Error, Result};
