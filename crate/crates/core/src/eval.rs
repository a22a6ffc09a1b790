//! Scoring learned models against gold models (precision/recall under
//! node-numbering permutations, Jaccard overlap) and the experiment
//! protocol that varies how many other sources' models are known.

use std::collections::BTreeSet;
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labeling::{self, LabelPrediction, Labeler, SemanticType};
use crate::model::{SemanticModel, SourceTable, Triple};
use crate::ontology::Ontology;
use crate::pipeline::{self, LearnOptions};

/// Which links enter the triple comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    All,
    /// Class-node-to-class-node links only.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Each attribute annotated with its gold type at confidence 1;
    /// comparison defaults to internal links.
    CorrectTypes,
    /// Types learned from the known sources' data; comparison defaults
    /// to all links.
    LearnedTypes,
}

/// Above this many numbering permutations (product of factorials of the
/// duplicate-label group sizes) the search falls back to a greedy
/// per-group assignment and flags the result.
pub const PERMUTATION_GUARD: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when the permutation guard forced the greedy fallback.
    pub permutation_capped: bool,
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn scoped_rel(
    model: &SemanticModel,
    numbering: &std::collections::BTreeMap<String, String>,
    scope: Scope,
) -> BTreeSet<Triple> {
    match scope {
        Scope::All => model.rel(numbering),
        Scope::Internal => model.rel_internal(numbering),
    }
}

/// Largest intersection with `gold_rel` achievable by renumbering the
/// duplicated class labels of `learned`. Returns (intersection size,
/// learned rel size, guard hit).
fn best_intersection(
    gold_rel: &BTreeSet<Triple>,
    learned: &SemanticModel,
    scope: Scope,
) -> (usize, usize, bool) {
    let groups: Vec<(String, Vec<String>)> = learned
        .class_groups()
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .collect();

    let base = learned.default_numbering();
    let rel_size = scoped_rel(learned, &base, scope).len();

    let factorial = |n: usize| -> u64 { (1..=n as u64).product::<u64>().max(1) };
    let total: u64 = groups
        .iter()
        .map(|(_, ids)| factorial(ids.len()))
        .try_fold(1u64, |acc, f| acc.checked_mul(f))
        .unwrap_or(u64::MAX);

    if groups.is_empty() {
        let intersection = scoped_rel(learned, &base, scope)
            .intersection(gold_rel)
            .count();
        return (intersection, rel_size, false);
    }

    if total <= PERMUTATION_GUARD {
        // Exhaustive: try every combination of per-group ordinal
        // permutations.
        let per_group: Vec<Vec<Vec<usize>>> = groups
            .iter()
            .map(|(_, ids)| (1..=ids.len()).permutations(ids.len()).collect())
            .collect();
        let mut best = 0usize;
        let mut indices = vec![0usize; groups.len()];
        loop {
            let mut numbering = base.clone();
            for (g, (label, ids)) in groups.iter().enumerate() {
                for (slot, id) in ids.iter().enumerate() {
                    let ordinal = per_group[g][indices[g]][slot];
                    numbering.insert(id.clone(), format!("{label}{ordinal}"));
                }
            }
            let intersection = scoped_rel(learned, &numbering, scope)
                .intersection(gold_rel)
                .count();
            best = best.max(intersection);

            let mut carry = groups.len();
            for g in (0..groups.len()).rev() {
                indices[g] += 1;
                if indices[g] < per_group[g].len() {
                    carry = g;
                    break;
                }
                indices[g] = 0;
            }
            if carry == groups.len() {
                break;
            }
        }
        (best, rel_size, false)
    } else {
        // Greedy: settle one duplicate group at a time, keeping the
        // assignment that maximizes the running intersection.
        let mut numbering = base.clone();
        for (label, ids) in &groups {
            let mut best_perm: Option<Vec<usize>> = None;
            let mut best_count = 0usize;
            for perm in (1..=ids.len()).permutations(ids.len()) {
                let mut trial = numbering.clone();
                for (slot, id) in ids.iter().enumerate() {
                    trial.insert(id.clone(), format!("{label}{}", perm[slot]));
                }
                let count = scoped_rel(learned, &trial, scope)
                    .intersection(gold_rel)
                    .count();
                if count > best_count || best_perm.is_none() {
                    best_count = count;
                    best_perm = Some(perm);
                }
            }
            if let Some(perm) = best_perm {
                for (slot, id) in ids.iter().enumerate() {
                    numbering.insert(id.clone(), format!("{label}{}", perm[slot]));
                }
            }
        }
        let intersection = scoped_rel(learned, &numbering, scope)
            .intersection(gold_rel)
            .count();
        (intersection, rel_size, true)
    }
}

/// Precision/recall/F1 of a learned model against gold. The gold
/// numbering is fixed (declaration order); the learned model's duplicate
/// class labels are renumbered to maximize F1.
pub fn precision_recall(
    gold: &SemanticModel,
    learned: &SemanticModel,
    scope: Scope,
) -> PrecisionRecall {
    let gold_rel = scoped_rel(gold, &gold.default_numbering(), scope);
    let (intersection, learned_size, capped) = best_intersection(&gold_rel, learned, scope);

    if gold_rel.is_empty() && learned_size == 0 {
        return PrecisionRecall {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            permutation_capped: capped,
        };
    }
    let precision = if learned_size > 0 {
        intersection as f64 / learned_size as f64
    } else {
        0.0
    };
    let recall = if !gold_rel.is_empty() {
        intersection as f64 / gold_rel.len() as f64
    } else {
        0.0
    };
    PrecisionRecall {
        precision,
        recall,
        f1: f1_of(precision, recall),
        permutation_capped: capped,
    }
}

/// Jaccard similarity of the two models' triple sets under the best
/// renumbering of the second model. Two empty models overlap fully.
pub fn overlap(a: &SemanticModel, b: &SemanticModel) -> f64 {
    let a_rel = a.rel(&a.default_numbering());
    let (intersection, b_size, _) = best_intersection(&a_rel, b, Scope::All);
    let union = a_rel.len() + b_size - intersection;
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// Number of known models per target source.
    pub j: usize,
    /// Candidate types per attribute.
    pub top_k_types: usize,
    /// Comparison scope; defaults by scenario when `None`.
    pub scope: Option<Scope>,
    /// Shuffles corpus order when set; otherwise corpus order is kept.
    pub seed: Option<u64>,
    pub options: LearnOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub source: String,
    pub j: usize,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mrr: f64,
    pub graph_seconds: f64,
    pub mapping_seconds: f64,
    pub steiner_seconds: f64,
    pub rank_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub rows: Vec<ExperimentRow>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_mrr: f64,
}

impl EvalReport {
    fn from_rows(rows: Vec<ExperimentRow>) -> EvalReport {
        let n = rows.len().max(1) as f64;
        EvalReport {
            mean_precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            mean_recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            mean_f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
            mean_mrr: rows.iter().map(|r| r.mrr).sum::<f64>() / n,
            rows,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::InvalidSource {
            file: path.display().to_string(),
            detail: e.to_string(),
        })?;
        writer
            .write_record([
                "source",
                "j",
                "k",
                "precision",
                "recall",
                "f1",
                "mrr",
                "graph_seconds",
                "mapping_seconds",
                "steiner_seconds",
                "rank_seconds",
            ])
            .map_err(|e| Error::InvalidSource {
                file: path.display().to_string(),
                detail: e.to_string(),
            })?;
        for row in &self.rows {
            writer
                .write_record([
                    row.source.clone(),
                    row.j.to_string(),
                    row.k.to_string(),
                    format!("{:.6}", row.precision),
                    format!("{:.6}", row.recall),
                    format!("{:.6}", row.f1),
                    format!("{:.6}", row.mrr),
                    format!("{:.6}", row.graph_seconds),
                    format!("{:.6}", row.mapping_seconds),
                    format!("{:.6}", row.steiner_seconds),
                    format!("{:.6}", row.rank_seconds),
                ])
                .map_err(|e| Error::InvalidSource {
                    file: path.display().to_string(),
                    detail: e.to_string(),
                })?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn gold_types_for(table: &SourceTable, model: &SemanticModel) -> Result<Vec<SemanticType>> {
    let types = model.attribute_types();
    table
        .attributes
        .iter()
        .map(|attribute| {
            types
                .get(attribute)
                .cloned()
                .ok_or_else(|| Error::TrainingCoverage {
                    name: table.name.clone(),
                    attribute: attribute.clone(),
                })
        })
        .collect()
}

/// Run the experiment protocol: for each target source, the first `j`
/// other sources (in plan order) are known; the pipeline learns a model
/// and the rank-1 candidate is scored against gold. Rows come back in
/// corpus order.
pub fn run_experiment(
    plan: &ExperimentPlan,
    corpus: &[(SourceTable, SemanticModel)],
    ontology: &Ontology,
    scenario: Scenario,
) -> Result<EvalReport> {
    if corpus.is_empty() || plan.j > corpus.len() - 1 {
        return Err(Error::InvalidConfig {
            detail: format!(
                "j = {} out of range for a corpus of {} sources",
                plan.j,
                corpus.len()
            ),
        });
    }
    for (table, model) in corpus {
        gold_types_for(table, model)?;
    }

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    if let Some(seed) = plan.seed {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }

    let scope = plan.scope.unwrap_or(match scenario {
        Scenario::CorrectTypes => Scope::Internal,
        Scenario::LearnedTypes => Scope::All,
    });
    let mut options = plan.options.clone();
    options.top_k_types = plan.top_k_types;

    let rows: Result<Vec<ExperimentRow>> = order
        .par_iter()
        .map(|&target_index| {
            let (table, gold) = &corpus[target_index];
            let known: Vec<SemanticModel> = order
                .iter()
                .filter(|&&i| i != target_index)
                .take(plan.j)
                .map(|&i| corpus[i].1.clone())
                .collect();

            let gold_types = gold_types_for(table, gold)?;
            let predictions: Vec<(String, Vec<LabelPrediction>)> = match scenario {
                Scenario::CorrectTypes => table
                    .attributes
                    .iter()
                    .zip(&gold_types)
                    .map(|(attribute, gold_type)| {
                        (
                            attribute.clone(),
                            vec![LabelPrediction {
                                semantic_type: gold_type.clone(),
                                confidence: 1.0,
                            }],
                        )
                    })
                    .collect(),
                Scenario::LearnedTypes => {
                    let training: Vec<(SourceTable, SemanticModel)> = order
                        .iter()
                        .filter(|&&i| i != target_index)
                        .take(plan.j)
                        .map(|&i| corpus[i].clone())
                        .collect();
                    if training.is_empty() {
                        table
                            .attributes
                            .iter()
                            .map(|a| (a.clone(), Vec::new()))
                            .collect()
                    } else {
                        let labeler = Labeler::train(&training)?;
                        labeler.predict_table(
                            table,
                            plan.top_k_types,
                            options.keep_zero_confidence,
                        )?
                    }
                }
            };

            let ranked_lists: Vec<Vec<LabelPrediction>> =
                predictions.iter().map(|(_, p)| p.clone()).collect();
            let mrr = labeling::mrr(&ranked_lists, &gold_types);

            let usable = predictions.iter().all(|(_, p)| !p.is_empty());
            let (scores, timings) = if usable {
                match pipeline::learn(ontology, &known, &predictions, &options) {
                    Ok(outcome) => {
                        let top = &outcome.ranked[0];
                        (precision_recall(gold, &top.model, scope), outcome.timings)
                    }
                    Err(Error::NoModel { detail }) => {
                        log::warn!("{}: no model ({detail})", table.name);
                        (
                            PrecisionRecall {
                                precision: 0.0,
                                recall: 0.0,
                                f1: 0.0,
                                permutation_capped: false,
                            },
                            Default::default(),
                        )
                    }
                    Err(other) => return Err(other),
                }
            } else {
                log::warn!("{}: no predictions for some attribute", table.name);
                (
                    PrecisionRecall {
                        precision: 0.0,
                        recall: 0.0,
                        f1: 0.0,
                        permutation_capped: false,
                    },
                    Default::default(),
                )
            };

            Ok(ExperimentRow {
                source: table.name.clone(),
                j: plan.j,
                k: plan.top_k_types,
                precision: scores.precision,
                recall: scores.recall,
                f1: scores.f1,
                mrr,
                graph_seconds: timings.graph_seconds,
                mapping_seconds: timings.mapping_seconds,
                steiner_seconds: timings.steiner_seconds,
                rank_seconds: timings.rank_seconds,
            })
        })
        .collect();

    Ok(EvalReport::from_rows(rows?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Validation;

    fn fig_pair() -> (SemanticModel, SemanticModel) {
        // Gold: work -> person1 -creator->, person1 -knows-> person2.
        let gold: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": "gold",
            "class_nodes": [
                {"id": "w", "class": "aac:CulturalHeritageObject"},
                {"id": "p1", "class": "aac:Person"},
                {"id": "p2", "class": "aac:Person"}
            ],
            "data_nodes": [],
            "links": [
                {"from": "w", "to": "p1", "property": "dcterms:creator"},
                {"from": "p1", "to": "p2", "property": "foaf:knows"}
            ]
        }))
        .unwrap();
        gold.validate(Validation::Strict).unwrap();
        // Learned: the knows link points the other way (p2 knows p1).
        let learned: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": "learned",
            "class_nodes": [
                {"id": "w", "class": "aac:CulturalHeritageObject"},
                {"id": "p1", "class": "aac:Person"},
                {"id": "p2", "class": "aac:Person"}
            ],
            "data_nodes": [],
            "links": [
                {"from": "w", "to": "p1", "property": "dcterms:creator"},
                {"from": "p2", "to": "p1", "property": "foaf:knows"}
            ]
        }))
        .unwrap();
        learned.validate(Validation::Relaxed).unwrap();
        (gold, learned)
    }

    #[test]
    fn identical_models_score_one() {
        let (gold, _) = fig_pair();
        let scores = precision_recall(&gold, &gold, Scope::All);
        assert_eq!(scores.precision, 1.0);
        assert_eq!(scores.recall, 1.0);
        assert_eq!(scores.f1, 1.0);
    }

    #[test]
    fn flipped_direction_scores_half_under_best_permutation() {
        let (gold, learned) = fig_pair();
        let scores = precision_recall(&gold, &learned, Scope::All);
        assert_eq!(scores.precision, 0.5);
        assert_eq!(scores.recall, 0.5);
        assert!(!scores.permutation_capped);
    }

    #[test]
    fn missing_link_counts() {
        let (gold, _) = fig_pair();
        let mut learned = gold.clone();
        learned.id = "learned".to_string();
        learned.links.pop();
        let scores = precision_recall(&gold, &learned, Scope::All);
        assert_eq!(scores.precision, 1.0);
        assert_eq!(scores.recall, 0.5);
    }

    #[test]
    fn precision_of_a_vs_b_is_recall_of_b_vs_a() {
        let (gold, learned) = fig_pair();
        let ab = precision_recall(&gold, &learned, Scope::All);
        let ba = precision_recall(&learned, &gold, Scope::All);
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
    }

    #[test]
    fn overlap_properties() {
        let (gold, learned) = fig_pair();
        assert_eq!(overlap(&gold, &gold), 1.0);
        assert_eq!(overlap(&gold, &learned), overlap(&learned, &gold));
        // 1 shared triple of 3 distinct.
        assert!((overlap(&gold, &learned) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_models_overlap_zero() {
        let (gold, _) = fig_pair();
        let other: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": "other",
            "class_nodes": [{"id": "c", "class": "ex:Thing"}],
            "data_nodes": [{"id": "d", "attribute": "x"}],
            "links": [{"from": "c", "to": "d", "property": "ex:p"}]
        }))
        .unwrap();
        assert_eq!(overlap(&gold, &other), 0.0);
    }

    #[test]
    fn empty_models_overlap_fully() {
        let empty = SemanticModel {
            id: "e".into(),
            class_nodes: vec![],
            data_nodes: vec![],
            links: vec![],
        };
        assert_eq!(overlap(&empty, &empty), 1.0);
    }

    #[test]
    fn hand_counted_overlap() {
        // Two models sharing 2 triples of a 4-triple union: 2/4.
        let a: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": "a",
            "class_nodes": [
                {"id": "w", "class": "ex:Work"},
                {"id": "p", "class": "ex:Person"}
            ],
            "data_nodes": [{"id": "d", "attribute": "title"}],
            "links": [
                {"from": "w", "to": "p", "property": "ex:creator"},
                {"from": "w", "to": "d", "property": "ex:title"},
                {"from": "p", "to": "w", "property": "ex:made"}
            ]
        }))
        .unwrap();
        let b: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": "b",
            "class_nodes": [
                {"id": "w", "class": "ex:Work"},
                {"id": "p", "class": "ex:Person"}
            ],
            "data_nodes": [{"id": "d", "attribute": "title"}],
            "links": [
                {"from": "w", "to": "p", "property": "ex:creator"},
                {"from": "w", "to": "d", "property": "ex:title"},
                {"from": "p", "to": "w", "property": "ex:owns"}
            ]
        }))
        .unwrap();
        assert_eq!(overlap(&a, &b), 0.5);
    }
}
