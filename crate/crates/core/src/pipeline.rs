//! End-to-end learning: build the alignment graph, search candidate
//! mappings, enumerate Steiner trees per mapping, and rank the results.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::graph::AlignmentGraph;
use crate::labeling::LabelPrediction;
use crate::mapping::{self, Mapping, ScoreWeights};
use crate::model::SemanticModel;
use crate::ontology::Ontology;
use crate::steiner::{self, RankedModel, SteinerTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeOrder {
    /// Source column order (the default).
    Source,
    /// Highest top-prediction confidence first; ties keep source order.
    MostConfidentFirst,
}

#[derive(Debug, Clone)]
pub struct LearnOptions {
    /// Candidate semantic types consumed per attribute.
    pub top_k_types: usize,
    /// Beam width; `None` disables pruning.
    pub branching_factor: Option<usize>,
    pub num_of_candidates: usize,
    /// Trees requested per candidate mapping.
    pub steiner_k: usize,
    pub w_l: f64,
    pub epsilon: f64,
    pub weights: ScoreWeights,
    pub attribute_order: AttributeOrder,
    pub keep_zero_confidence: bool,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            top_k_types: 1,
            branching_factor: Some(50),
            num_of_candidates: 50,
            steiner_k: 10,
            w_l: 1.0,
            epsilon: 0.01,
            weights: ScoreWeights::default(),
            attribute_order: AttributeOrder::Source,
            keep_zero_confidence: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimings {
    pub graph_seconds: f64,
    pub mapping_seconds: f64,
    pub steiner_seconds: f64,
    pub rank_seconds: f64,
}

pub struct LearnOutcome {
    pub graph: AlignmentGraph,
    pub mappings: Vec<Mapping>,
    pub ranked: Vec<RankedModel>,
    pub timings: PhaseTimings,
}

/// Build the finalized alignment graph from known models, predicted
/// types, and ontology paths.
pub fn build_graph(
    ontology: &Ontology,
    known_models: &[SemanticModel],
    predictions: &[(String, Vec<LabelPrediction>)],
    w_l: f64,
    epsilon: f64,
) -> Result<AlignmentGraph> {
    let mut graph = AlignmentGraph::new();
    graph.add_known_models(known_models)?;
    graph.add_semantic_types(predictions);
    graph.add_ontology_paths(ontology)?;
    graph.finalize_weights(w_l, epsilon);
    Ok(graph)
}

/// Learn ranked candidate models for a source whose attributes carry the
/// given ranked type predictions (source order).
pub fn learn(
    ontology: &Ontology,
    known_models: &[SemanticModel],
    predictions: &[(String, Vec<LabelPrediction>)],
    options: &LearnOptions,
) -> Result<LearnOutcome> {
    options.weights.validate()?;
    let mut predictions: Vec<(String, Vec<LabelPrediction>)> = predictions
        .iter()
        .map(|(attribute, ranked)| {
            let mut ranked = ranked.clone();
            ranked.truncate(options.top_k_types);
            (attribute.clone(), ranked)
        })
        .collect();
    if options.attribute_order == AttributeOrder::MostConfidentFirst {
        let mut indexed: Vec<(usize, (String, Vec<LabelPrediction>))> =
            predictions.into_iter().enumerate().collect();
        indexed.sort_by(|(ia, (_, a)), (ib, (_, b))| {
            let ca = a.first().map(|p| p.confidence).unwrap_or(0.0);
            let cb = b.first().map(|p| p.confidence).unwrap_or(0.0);
            cb.total_cmp(&ca).then_with(|| ia.cmp(ib))
        });
        predictions = indexed.into_iter().map(|(_, p)| p).collect();
    }

    let start = Instant::now();
    let graph = build_graph(
        ontology,
        known_models,
        &predictions,
        options.w_l,
        options.epsilon,
    )?;
    let graph_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "alignment graph: {} nodes, {} links, {} known models",
        graph.nodes().len(),
        graph.links().len(),
        graph.model_count()
    );

    let start = Instant::now();
    let mappings = mapping::generate_candidate_mappings(
        &graph,
        &predictions,
        options.branching_factor,
        options.num_of_candidates,
        &options.weights,
    )?;
    let mapping_seconds = start.elapsed().as_secs_f64();
    log::info!("candidate mappings: {}", mappings.len());

    let start = Instant::now();
    let trees: Vec<(steiner::CandidateTree, usize)> = mappings
        .par_iter()
        .enumerate()
        .map(|(index, mapping)| {
            let task = SteinerTask {
                steiner_nodes: mapping.node_set().into_iter().collect(),
                k: options.steiner_k,
            };
            steiner::top_k_steiner(&graph, &task)
                .into_iter()
                .map(|tree| (tree, index))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let steiner_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let ranked = steiner::rank_candidates(&graph, &trees, &mappings, "learned")?;
    let rank_seconds = start.elapsed().as_secs_f64();
    log::info!("ranked candidate models: {}", ranked.len());

    Ok(LearnOutcome {
        graph,
        mappings,
        ranked,
        timings: PhaseTimings {
            graph_seconds,
            mapping_seconds,
            steiner_seconds,
            rank_seconds,
        },
    })
}

/// Serialize ranked models (with their scores) to the audit JSON format.
pub fn ranked_to_json(outcome: &LearnOutcome, source: &str) -> serde_json::Value {
    serde_json::json!({
        "source": source,
        "models": outcome
            .ranked
            .iter()
            .enumerate()
            .map(|(i, r)| serde_json::json!({
                "rank": i + 1,
                "link_coherence": r.link_coherence,
                "cost": r.cost,
                "mapping_score": r.mapping_score,
                "model": r.model,
            }))
            .collect::<Vec<_>>(),
    })
}

/// Serialize per-attribute predictions to the interchange JSON format.
pub fn predictions_to_json(
    source: &str,
    predictions: &[(String, Vec<LabelPrediction>)],
) -> serde_json::Value {
    serde_json::json!({
        "source": source,
        "attributes": predictions
            .iter()
            .map(|(attribute, ranked)| serde_json::json!({
                "attribute": attribute,
                "predictions": ranked,
            }))
            .collect::<Vec<_>>(),
    })
}

/// Parse the interchange JSON back into per-attribute predictions.
pub fn predictions_from_json(
    value: &serde_json::Value,
) -> Result<Vec<(String, Vec<LabelPrediction>)>> {
    let attributes = value
        .get("attributes")
        .and_then(|a| a.as_array())
        .ok_or_else(|| crate::error::Error::MalformedDocument {
            file: "predictions".to_string(),
            detail: "missing `attributes` array".to_string(),
        })?;
    attributes
        .iter()
        .map(|entry| {
            let attribute = entry
                .get("attribute")
                .and_then(|a| a.as_str())
                .ok_or_else(|| crate::error::Error::MalformedDocument {
                    file: "predictions".to_string(),
                    detail: "attribute entry without `attribute`".to_string(),
                })?
                .to_string();
            let ranked: Vec<LabelPrediction> =
                serde_json::from_value(entry.get("predictions").cloned().unwrap_or_default())
                    .map_err(|e| crate::error::Error::MalformedDocument {
                        file: "predictions".to_string(),
                        detail: e.to_string(),
                    })?;
            Ok((attribute, ranked))
        })
        .collect()
}
