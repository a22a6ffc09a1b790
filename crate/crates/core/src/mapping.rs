//! Beam search over mappings from source attributes to (class node,
//! data node) matches in the alignment graph, scored by confidence,
//! node coherence, and size reduction.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AlignmentGraph, NodeIndex};
use crate::labeling::{LabelPrediction, SemanticType};
use crate::ontology::KARMA_URI;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeMatch {
    pub attribute: String,
    pub semantic_type: SemanticType,
    pub class_node: NodeIndex,
    pub data_node: NodeIndex,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreWeights {
    pub confidence: f64,
    pub coherence: f64,
    pub size_reduction: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            confidence: 1.0 / 3.0,
            coherence: 1.0 / 3.0,
            size_reduction: 1.0 / 3.0,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.confidence, self.coherence, self.size_reduction];
        if parts.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidWeights {
                detail: "weights must be non-negative".to_string(),
            });
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights {
                detail: format!("weights must sum to 1, got {sum}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mapping {
    pub matches: Vec<AttributeMatch>,
    pub confidence: f64,
    pub coherence: f64,
    pub size_reduction: f64,
    pub score: f64,
}

impl Mapping {
    /// Distinct node indices over all matches.
    pub fn node_set(&self) -> BTreeSet<NodeIndex> {
        self.matches
            .iter()
            .flat_map(|m| [m.class_node, m.data_node])
            .collect()
    }

    pub fn size(&self) -> usize {
        self.node_set().len()
    }

    fn sort_key(&self) -> Vec<(NodeIndex, NodeIndex)> {
        self.matches
            .iter()
            .map(|m| (m.class_node, m.data_node))
            .collect()
    }
}

/// All (class node, data node) pairs matching a semantic type: the class
/// node carries the type's class label and links to the data node with
/// the type's property (karma:uri for bare-class types). Creation order.
pub fn find_matches(
    graph: &AlignmentGraph,
    semantic_type: &SemanticType,
) -> Vec<(NodeIndex, NodeIndex)> {
    let property = semantic_type.property.as_deref().unwrap_or(KARMA_URI);
    let mut matches = Vec::new();
    for class_node in graph.class_nodes_labeled(&semantic_type.class) {
        for &link_index in graph.out_links(class_node) {
            let link = graph.link(link_index);
            if link.property == property
                && graph.node(link.to).kind == crate::graph::NodeKind::Data
            {
                matches.push((class_node, link.to));
            }
        }
    }
    matches.sort();
    matches
}

/// Score a mapping in place: confidence is the mean match confidence;
/// coherence the largest fraction of the mapping's nodes tagged by one
/// model; size reduction rewards reusing class nodes across attributes.
pub fn score_mapping(
    graph: &AlignmentGraph,
    mapping: &mut Mapping,
    weights: &ScoreWeights,
) -> Result<()> {
    weights.validate()?;
    let attribute_count = mapping.matches.len();
    assert!(attribute_count >= 1, "mapping covers at least one attribute");

    mapping.confidence = mapping
        .matches
        .iter()
        .map(|m| m.confidence)
        .sum::<f64>()
        / attribute_count as f64;

    let nodes = mapping.node_set();
    let size = nodes.len();

    let mut best_model_count = 0usize;
    let mut model_ids: BTreeSet<&str> = BTreeSet::new();
    for &node in &nodes {
        model_ids.extend(graph.node(node).tags.iter().map(String::as_str));
    }
    for model in model_ids {
        let count = nodes
            .iter()
            .filter(|&&n| graph.node(n).tags.contains(model))
            .count();
        best_model_count = best_model_count.max(count);
    }
    mapping.coherence = best_model_count as f64 / size as f64;

    let lower = attribute_count + 1;
    let upper = 2 * attribute_count;
    mapping.size_reduction =
        (upper as f64 - size as f64) / (upper as f64 - lower as f64 + 1.0);

    mapping.score = weights.confidence * mapping.confidence
        + weights.coherence * mapping.coherence
        + weights.size_reduction * mapping.size_reduction;
    Ok(())
}

/// Beam search: attributes are processed in the given order; after each
/// one every surviving mapping is extended by every match of every
/// candidate type, scored, sorted (score descending, ties by node-id
/// sequence), and truncated to `branching_factor`. `None` disables
/// truncation, making the search exhaustive.
pub fn generate_candidate_mappings(
    graph: &AlignmentGraph,
    predictions: &[(String, Vec<LabelPrediction>)],
    branching_factor: Option<usize>,
    num_of_candidates: usize,
    weights: &ScoreWeights,
) -> Result<Vec<Mapping>> {
    weights.validate()?;
    let mut beam: Vec<Mapping> = Vec::new();

    for (attribute, ranked) in predictions {
        let mut matches: Vec<(SemanticType, f64, NodeIndex, NodeIndex)> = Vec::new();
        for prediction in ranked {
            for (class_node, data_node) in find_matches(graph, &prediction.semantic_type) {
                matches.push((
                    prediction.semantic_type.clone(),
                    prediction.confidence,
                    class_node,
                    data_node,
                ));
            }
        }
        if matches.is_empty() {
            return Err(Error::NoModel {
                detail: format!("attribute `{attribute}` has no match in the graph"),
            });
        }

        let extend = |base: &Mapping| -> Vec<Mapping> {
            matches
                .iter()
                .filter(|(_, _, _, data_node)| {
                    // One data node represents one attribute slot.
                    base.matches.iter().all(|m| m.data_node != *data_node)
                })
                .map(|(semantic_type, confidence, class_node, data_node)| {
                    let mut extended = base.clone();
                    extended.matches.push(AttributeMatch {
                        attribute: attribute.clone(),
                        semantic_type: semantic_type.clone(),
                        class_node: *class_node,
                        data_node: *data_node,
                        confidence: *confidence,
                    });
                    extended
                })
                .collect()
        };

        let empty = Mapping {
            matches: Vec::new(),
            confidence: 0.0,
            coherence: 0.0,
            size_reduction: 0.0,
            score: 0.0,
        };
        beam = if beam.is_empty() {
            extend(&empty)
        } else {
            beam.iter().flat_map(|m| extend(m)).collect()
        };
        if beam.is_empty() {
            return Err(Error::NoModel {
                detail: format!(
                    "no mapping survives attribute `{attribute}` (all matches collide)"
                ),
            });
        }

        for mapping in &mut beam {
            score_mapping(graph, mapping, weights)?;
        }
        beam.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.sort_key().cmp(&b.sort_key()))
        });
        if let Some(limit) = branching_factor {
            beam.truncate(limit);
        }
    }

    beam.truncate(num_of_candidates);
    Ok(beam)
}
