//! Semantic labeling: learn per-type value profiles from labeled sources
//! and predict ranked candidate semantic types for new columns.
//!
//! Textual columns are scored by cosine similarity between TF-IDF vectors
//! of the query column and each type's training document; numeric columns
//! by a two-sample Kolmogorov-Smirnov statistic (confidence = 1 - D).
//! A column counts as numeric when at least 80% of its non-empty values
//! parse as decimal numbers.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SemanticModel, SourceTable};

/// Fraction of non-empty values that must parse as numbers for a column
/// to be profiled numerically.
pub const NUMERIC_THRESHOLD: f64 = 0.8;

/// Annotation of one attribute: either a bare ontology class (values are
/// instance URIs) or a (class, data property) pair (values are literals).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticType {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<String>,
}

impl SemanticType {
    pub fn bare(class: &str) -> SemanticType {
        SemanticType {
            class: class.to_string(),
            property: None,
        }
    }

    pub fn with_property(class: &str, property: &str) -> SemanticType {
        SemanticType {
            class: class.to_string(),
            property: Some(property.to_string()),
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.property {
            Some(p) => write!(f, "<{},{}>", self.class, p),
            None => write!(f, "<{}>", self.class),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPrediction {
    #[serde(flatten)]
    pub semantic_type: SemanticType,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TypeProfile {
    /// Token counts of the concatenated training document.
    term_counts: BTreeMap<String, u64>,
    /// Numeric sample, in training order.
    samples: Vec<f64>,
    /// Attribute names seen for this type. Stored but not scored.
    attribute_names: Vec<String>,
}

/// Learned labeling function. Immutable after training; predictions are
/// read-only and safe to run concurrently.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Labeler {
    textual: BTreeMap<String, TypeProfile>,
    numeric: BTreeMap<String, TypeProfile>,
    #[serde(skip)]
    idf: HashMap<String, f64>,
    #[serde(skip)]
    norms: HashMap<String, f64>,
}

fn type_key(t: &SemanticType) -> String {
    match &t.property {
        Some(p) => format!("{}\u{1f}{}", t.class, p),
        None => t.class.clone(),
    }
}

fn key_to_type(key: &str) -> SemanticType {
    match key.split_once('\u{1f}') {
        Some((class, property)) => SemanticType::with_property(class, property),
        None => SemanticType::bare(key),
    }
}

pub fn tokenize(value: &str) -> Vec<String> {
    value
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn parse_number(value: &str) -> Option<f64> {
    value.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numeric_fraction(values: &[&str]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let numeric = values.iter().filter(|v| parse_number(v).is_some()).count();
    numeric as f64 / values.len() as f64
}

/// Two-sample Kolmogorov-Smirnov statistic: the maximum distance between
/// the empirical CDFs of the two samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.total_cmp(q));
    ys.sort_unstable_by(|p, q| p.total_cmp(q));
    let (mut i, mut j) = (0usize, 0usize);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d.clamp(0.0, 1.0)
}

impl Labeler {
    /// Learn type profiles from (table, gold model) pairs. Values of
    /// attributes sharing a semantic type are concatenated into that
    /// type's document or numeric sample; the pooled values decide which
    /// index the type lands in.
    pub fn train(labeled: &[(SourceTable, SemanticModel)]) -> Result<Labeler> {
        let mut pooled: BTreeMap<String, (Vec<String>, Vec<String>)> = BTreeMap::new();
        for (table, model) in labeled {
            let types = model.attribute_types();
            for attribute in &table.attributes {
                let semantic_type =
                    types
                        .get(attribute)
                        .ok_or_else(|| Error::TrainingCoverage {
                            name: table.name.clone(),
                            attribute: attribute.clone(),
                        })?;
                let values = table.column(attribute).unwrap_or_default();
                let entry = pooled.entry(type_key(semantic_type)).or_default();
                entry.0.extend(values);
                entry.1.push(attribute.clone());
            }
        }

        let mut labeler = Labeler::default();
        for (key, (values, attribute_names)) in pooled {
            let non_empty: Vec<&str> = values
                .iter()
                .map(String::as_str)
                .filter(|v| !v.trim().is_empty())
                .collect();
            let mut profile = TypeProfile {
                attribute_names,
                ..TypeProfile::default()
            };
            if numeric_fraction(&non_empty) >= NUMERIC_THRESHOLD && !non_empty.is_empty() {
                profile.samples = non_empty.iter().filter_map(|v| parse_number(v)).collect();
                labeler.numeric.insert(key, profile);
            } else {
                for value in &non_empty {
                    for token in tokenize(value) {
                        *profile.term_counts.entry(token).or_insert(0) += 1;
                    }
                }
                labeler.textual.insert(key, profile);
            }
        }
        labeler.rebuild_index();
        Ok(labeler)
    }

    /// Smoothed IDF over the textual type documents plus per-document
    /// L2 norms; derived state, rebuilt after train/load.
    fn rebuild_index(&mut self) {
        let n = self.textual.len() as f64;
        let mut df: HashMap<String, f64> = HashMap::new();
        for profile in self.textual.values() {
            for token in profile.term_counts.keys() {
                *df.entry(token.clone()).or_insert(0.0) += 1.0;
            }
        }
        self.idf = df
            .into_iter()
            .map(|(token, df)| (token, ((1.0 + n) / (1.0 + df)).ln() + 1.0))
            .collect();
        self.norms = self
            .textual
            .iter()
            .map(|(key, profile)| {
                let norm = profile
                    .term_counts
                    .iter()
                    .map(|(token, &count)| {
                        let w = count as f64 * self.idf[token];
                        w * w
                    })
                    .sum::<f64>()
                    .sqrt();
                (key.clone(), norm)
            })
            .collect();
    }

    pub fn is_trained(&self) -> bool {
        !self.textual.is_empty() || !self.numeric.is_empty()
    }

    /// Types known to the labeler, textual then numeric.
    pub fn known_types(&self) -> Vec<SemanticType> {
        self.textual
            .keys()
            .chain(self.numeric.keys())
            .map(|k| key_to_type(k))
            .collect()
    }

    /// Predict up to `k` candidate types for a column of values. Empty
    /// values are dropped first; an all-empty column yields no
    /// predictions. `keep_zero` retains zero-confidence candidates.
    pub fn predict(&self, values: &[String], k: usize, keep_zero: bool) -> Result<Vec<LabelPrediction>> {
        if !self.is_trained() {
            return Err(Error::NotTrained);
        }
        let non_empty: Vec<&str> = values
            .iter()
            .map(String::as_str)
            .filter(|v| !v.trim().is_empty())
            .collect();
        if non_empty.is_empty() {
            return Ok(Vec::new());
        }

        let mut scored: Vec<LabelPrediction> =
            if numeric_fraction(&non_empty) >= NUMERIC_THRESHOLD {
                let query: Vec<f64> = non_empty.iter().filter_map(|v| parse_number(v)).collect();
                self.numeric
                    .iter()
                    .map(|(key, profile)| LabelPrediction {
                        semantic_type: key_to_type(key),
                        confidence: (1.0 - ks_statistic(&query, &profile.samples))
                            .clamp(0.0, 1.0),
                    })
                    .collect()
            } else {
                let mut query: BTreeMap<String, u64> = BTreeMap::new();
                for value in &non_empty {
                    for token in tokenize(value) {
                        *query.entry(token).or_insert(0) += 1;
                    }
                }
                let query_norm = query
                    .iter()
                    .map(|(token, &count)| {
                        let idf = self.idf.get(token).copied().unwrap_or_else(|| {
                            ((1.0 + self.textual.len() as f64) / 1.0).ln() + 1.0
                        });
                        let w = count as f64 * idf;
                        w * w
                    })
                    .sum::<f64>()
                    .sqrt();
                self.textual
                    .iter()
                    .map(|(key, profile)| {
                        let dot: f64 = query
                            .iter()
                            .filter_map(|(token, &count)| {
                                let doc_count = *profile.term_counts.get(token)?;
                                let idf = self.idf[token];
                                Some((count as f64 * idf) * (doc_count as f64 * idf))
                            })
                            .sum();
                        let norm = self.norms[key] * query_norm;
                        let cosine = if norm > 0.0 { dot / norm } else { 0.0 };
                        LabelPrediction {
                            semantic_type: key_to_type(key),
                            confidence: cosine.clamp(0.0, 1.0),
                        }
                    })
                    .collect()
            };

        if !keep_zero {
            scored.retain(|p| p.confidence > 0.0);
        }
        scored.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.semantic_type.cmp(&b.semantic_type))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Predictions for every attribute of a table, in attribute order.
    pub fn predict_table(
        &self,
        table: &SourceTable,
        k: usize,
        keep_zero: bool,
    ) -> Result<Vec<(String, Vec<LabelPrediction>)>> {
        table
            .attributes
            .iter()
            .map(|attribute| {
                let values = table.column(attribute).unwrap_or_default();
                Ok((attribute.clone(), self.predict(&values, k, keep_zero)?))
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("labeler serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Labeler> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labeler: Labeler =
            serde_json::from_str(&text).map_err(|e| Error::MalformedDocument {
                file: path.display().to_string(),
                detail: e.to_string(),
            })?;
        labeler.rebuild_index();
        Ok(labeler)
    }
}

/// Mean reciprocal rank of the gold type across ranked prediction lists.
/// A gold type absent from its list contributes 0.
pub fn mrr(predictions: &[Vec<LabelPrediction>], gold: &[SemanticType]) -> f64 {
    assert_eq!(
        predictions.len(),
        gold.len(),
        "one gold type per attribute"
    );
    if gold.is_empty() {
        return 0.0;
    }
    let total: f64 = predictions
        .iter()
        .zip(gold)
        .map(|(ranked, gold_type)| {
            ranked
                .iter()
                .position(|p| &p.semantic_type == gold_type)
                .map(|rank| 1.0 / (rank + 1) as f64)
                .unwrap_or(0.0)
        })
        .sum();
    total / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Validation;
    use approx::assert_relative_eq;

    fn labeled_source(
        name: &str,
        attribute: &str,
        class: &str,
        property: Option<&str>,
        values: &[&str],
    ) -> (SourceTable, SemanticModel) {
        let table = SourceTable {
            name: name.to_string(),
            attributes: vec![attribute.to_string()],
            rows: values.iter().map(|v| vec![v.to_string()]).collect(),
        };
        let link_property = property.unwrap_or(crate::ontology::KARMA_URI);
        let model: SemanticModel = serde_json::from_value(serde_json::json!({
            "id": name,
            "class_nodes": [{"id": "c1", "class": class}],
            "data_nodes": [{"id": "d1", "attribute": attribute}],
            "links": [{"from": "c1", "to": "d1", "property": link_property}]
        }))
        .unwrap();
        model.validate(Validation::Strict).unwrap();
        (table, model)
    }

    #[test]
    fn self_retrieval_scores_one() {
        let pair = labeled_source(
            "s",
            "title",
            "ex:Work",
            Some("ex:title"),
            &["starry night", "water lilies"],
        );
        let labeler = Labeler::train(std::slice::from_ref(&pair)).unwrap();
        let column = pair.0.column("title").unwrap();
        let predictions = labeler.predict(&column, 1, false).unwrap();
        assert_eq!(predictions.len(), 1);
        assert_eq!(
            predictions[0].semantic_type,
            SemanticType::with_property("ex:Work", "ex:title")
        );
        assert_relative_eq!(predictions[0].confidence, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn token_disjoint_query_scores_zero() {
        let pair = labeled_source("s", "title", "ex:Work", Some("ex:title"), &["alpha beta"]);
        let labeler = Labeler::train(&[pair]).unwrap();
        let query = vec!["gamma delta".to_string()];
        // Oracle: disjoint vocabularies have dot product 0 by definition.
        assert!(labeler.predict(&query, 5, false).unwrap().is_empty());
        let kept = labeler.predict(&query, 5, true).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.0);
    }

    #[test]
    fn missing_attribute_is_a_coverage_error() {
        let (mut table, model) = labeled_source("s", "title", "ex:Work", Some("ex:title"), &["x"]);
        table.attributes.push("extra".to_string());
        table.rows.iter_mut().for_each(|r| r.push("y".to_string()));
        match Labeler::train(&[(table, model)]) {
            Err(Error::TrainingCoverage { attribute, .. }) => assert_eq!(attribute, "extra"),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn untrained_labeler_errors() {
        let labeler = Labeler::default();
        assert!(matches!(
            labeler.predict(&["x".to_string()], 1, false),
            Err(Error::NotTrained)
        ));
    }

    #[test]
    fn all_empty_column_predicts_nothing() {
        let pair = labeled_source("s", "title", "ex:Work", Some("ex:title"), &["x"]);
        let labeler = Labeler::train(&[pair]).unwrap();
        assert!(labeler
            .predict(&[String::new(), "  ".to_string()], 3, false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn disjoint_numeric_types_rank_their_own_column_first() {
        let years: Vec<String> = (0..40).map(|i| (1800 + 2 * i).to_string()).collect();
        let weights: Vec<String> = (0..40).map(|i| format!("{:.2}", 0.1 * i as f64)).collect();
        let year_refs: Vec<&str> = years.iter().map(String::as_str).collect();
        let weight_refs: Vec<&str> = weights.iter().map(String::as_str).collect();
        let pairs = vec![
            labeled_source("ys", "year", "ex:Work", Some("ex:year"), &year_refs),
            labeled_source("ws", "weight", "ex:Work", Some("ex:weight"), &weight_refs),
        ];
        let labeler = Labeler::train(&pairs).unwrap();

        let year_query: Vec<String> = (0..20).map(|i| (1801 + 4 * i).to_string()).collect();
        let weight_query: Vec<String> = (0..20).map(|i| format!("{:.2}", 0.15 * i as f64)).collect();

        // Independent oracle: brute-force D over every threshold value.
        let naive_ks = |a: &[f64], b: &[f64]| -> f64 {
            let mut d: f64 = 0.0;
            for t in a.iter().chain(b) {
                let fa = a.iter().filter(|x| *x <= t).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|x| *x <= t).count() as f64 / b.len() as f64;
                d = d.max((fa - fb).abs());
            }
            d
        };
        let parse = |vs: &[String]| -> Vec<f64> { vs.iter().map(|v| v.parse().unwrap()).collect() };
        let year_sample = parse(&years);
        let weight_sample = parse(&weights);
        let yq = parse(&year_query);
        assert_relative_eq!(
            ks_statistic(&yq, &year_sample),
            naive_ks(&yq, &year_sample),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            ks_statistic(&yq, &weight_sample),
            naive_ks(&yq, &weight_sample),
            epsilon = 1e-12
        );

        let top_year = &labeler.predict(&year_query, 2, false).unwrap()[0];
        assert_eq!(
            top_year.semantic_type,
            SemanticType::with_property("ex:Work", "ex:year")
        );
        let top_weight = &labeler.predict(&weight_query, 2, false).unwrap()[0];
        assert_eq!(
            top_weight.semantic_type,
            SemanticType::with_property("ex:Work", "ex:weight")
        );
    }

    #[test]
    fn row_order_does_not_change_predictions() {
        let pair = labeled_source(
            "s",
            "title",
            "ex:Work",
            Some("ex:title"),
            &["portrait of a lady", "lady with fan", "seated figure"],
        );
        let labeler = Labeler::train(&[pair]).unwrap();
        let forward = vec![
            "portrait study".to_string(),
            "figure of a lady".to_string(),
        ];
        let mut reversed = forward.clone();
        reversed.reverse();
        assert_eq!(
            labeler.predict(&forward, 3, true).unwrap(),
            labeler.predict(&reversed, 3, true).unwrap()
        );
    }

    #[test]
    fn save_load_round_trip_keeps_predictions() {
        let pair = labeled_source(
            "s",
            "title",
            "ex:Work",
            Some("ex:title"),
            &["portrait of a lady", "landscape with trees"],
        );
        let labeler = Labeler::train(&[pair]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labeler.json");
        labeler.save(&path).unwrap();
        let loaded = Labeler::load(&path).unwrap();
        let query = vec!["portrait of trees".to_string()];
        assert_eq!(
            labeler.predict(&query, 3, true).unwrap(),
            loaded.predict(&query, 3, true).unwrap()
        );
    }

    #[test]
    fn mrr_is_one_when_all_rank_first() {
        let gold = vec![
            SemanticType::with_property("ex:A", "ex:p"),
            SemanticType::bare("ex:B"),
        ];
        let predictions = vec![
            vec![LabelPrediction {
                semantic_type: gold[0].clone(),
                confidence: 0.9,
            }],
            vec![LabelPrediction {
                semantic_type: gold[1].clone(),
                confidence: 0.8,
            }],
        ];
        assert_eq!(mrr(&predictions, &gold), 1.0);
    }

    #[test]
    fn mrr_is_zero_when_gold_absent() {
        let gold = vec![SemanticType::bare("ex:B")];
        let predictions = vec![vec![LabelPrediction {
            semantic_type: SemanticType::bare("ex:A"),
            confidence: 0.9,
        }]];
        assert_eq!(mrr(&predictions, &gold), 0.0);
    }
}
