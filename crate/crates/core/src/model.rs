//! Semantic models (the learned/gold graphs over a source's attributes),
//! their JSON interchange format, the triple-set reduction used for
//! comparison, and source-table ingestion.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{Ontology, KARMA_URI, RDFS_SUBCLASS_OF};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassNode {
    pub id: String,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataNode {
    pub id: String,
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelLink {
    pub from: String,
    pub to: String,
    pub property: String,
}

/// How much structure validation demands.
///
/// Gold fixtures are single-rooted trees; models assembled from ranked
/// candidate trees may legitimately have several class nodes without an
/// incoming link, so they validate in `Relaxed` mode (weakly connected,
/// no directed cycle, data-node rules still enforced).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticModel {
    pub id: String,
    pub class_nodes: Vec<ClassNode>,
    pub data_nodes: Vec<DataNode>,
    pub links: Vec<ModelLink>,
}

/// One (source label, target label, property) entry of rel(sm).
pub type Triple = (String, String, String);

impl SemanticModel {
    pub fn load(path: impl AsRef<Path>) -> Result<SemanticModel> {
        Self::load_with(path, Validation::Strict)
    }

    pub fn load_with(path: impl AsRef<Path>, validation: Validation) -> Result<SemanticModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SemanticModel =
            serde_json::from_str(&text).map_err(|e| Error::MalformedDocument {
                file: path.display().to_string(),
                detail: format!("line {}, column {}: {}", e.line(), e.column(), e),
            })?;
        model.validate(validation)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn invalid(&self, detail: impl Into<String>) -> Error {
        Error::InvalidModel {
            model: self.id.clone(),
            detail: detail.into(),
        }
    }

    pub fn validate(&self, validation: Validation) -> Result<()> {
        let mut ids: HashSet<&str> = HashSet::new();
        for id in self
            .class_nodes
            .iter()
            .map(|n| n.id.as_str())
            .chain(self.data_nodes.iter().map(|n| n.id.as_str()))
        {
            if !ids.insert(id) {
                return Err(self.invalid(format!("duplicate node id `{id}`")));
            }
        }

        let class_ids: HashSet<&str> = self.class_nodes.iter().map(|n| n.id.as_str()).collect();
        let data_ids: HashSet<&str> = self.data_nodes.iter().map(|n| n.id.as_str()).collect();

        let mut incoming: HashMap<&str, usize> = HashMap::new();
        for link in &self.links {
            for endpoint in [&link.from, &link.to] {
                if !ids.contains(endpoint.as_str()) {
                    return Err(Error::DanglingReference {
                        model: self.id.clone(),
                        node: endpoint.clone(),
                    });
                }
            }
            if !class_ids.contains(link.from.as_str()) {
                return Err(self.invalid(format!(
                    "link source `{}` is not a class node",
                    link.from
                )));
            }
            if data_ids.contains(link.from.as_str()) {
                return Err(self.invalid(format!("data node `{}` has an outgoing link", link.from)));
            }
            *incoming.entry(link.to.as_str()).or_insert(0) += 1;
        }

        for node in &self.data_nodes {
            let n = incoming.get(node.id.as_str()).copied().unwrap_or(0);
            if n != 1 {
                return Err(self.invalid(format!(
                    "data node `{}` has {n} incoming links, expected exactly 1",
                    node.id
                )));
            }
        }

        let mut attrs: HashSet<&str> = HashSet::new();
        for node in &self.data_nodes {
            if !attrs.insert(node.attribute.as_str()) {
                return Err(self.invalid(format!(
                    "attribute `{}` appears on more than one data node",
                    node.attribute
                )));
            }
        }

        // rel must be injective on links.
        let mut seen_triples = HashSet::new();
        for triple in self.rel(&self.default_numbering()) {
            if !seen_triples.insert(triple.clone()) {
                return Err(self.invalid(format!(
                    "duplicate link {} -[{}]-> {}",
                    triple.0, triple.2, triple.1
                )));
            }
        }

        self.check_acyclic()?;

        if validation == Validation::Strict && !self.class_nodes.is_empty() {
            let roots: Vec<&ClassNode> = self
                .class_nodes
                .iter()
                .filter(|n| incoming.get(n.id.as_str()).copied().unwrap_or(0) == 0)
                .collect();
            if roots.len() != 1 {
                return Err(self.invalid(format!(
                    "expected exactly one root class node, found {}",
                    roots.len()
                )));
            }
            for node in &self.class_nodes {
                let n = incoming.get(node.id.as_str()).copied().unwrap_or(0);
                if n > 1 {
                    return Err(self.invalid(format!(
                        "class node `{}` has {n} incoming links",
                        node.id
                    )));
                }
            }
            let mut reached: HashSet<&str> = HashSet::new();
            let mut queue = vec![roots[0].id.as_str()];
            while let Some(id) = queue.pop() {
                if reached.insert(id) {
                    for link in self.links.iter().filter(|l| l.from == id) {
                        queue.push(link.to.as_str());
                    }
                }
            }
            if reached.len() != self.class_nodes.len() + self.data_nodes.len() {
                return Err(self.invalid("model is not connected from its root"));
            }
        } else if validation == Validation::Relaxed {
            self.check_weakly_connected()?;
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut indegree: HashMap<&str, usize> = HashMap::new();
        for node in &self.class_nodes {
            out.entry(node.id.as_str()).or_default();
            indegree.entry(node.id.as_str()).or_insert(0);
        }
        for link in &self.links {
            out.entry(link.from.as_str()).or_default().push(&link.to);
            *indegree.entry(link.to.as_str()).or_insert(0) += 1;
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut visited = 0;
        while let Some(id) = queue.pop() {
            visited += 1;
            for &next in out.get(id).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(next).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(next);
                }
            }
        }
        if visited != indegree.len() {
            return Err(self.invalid("directed cycle"));
        }
        Ok(())
    }

    fn check_weakly_connected(&self) -> Result<()> {
        let total = self.class_nodes.len() + self.data_nodes.len();
        if total <= 1 {
            return Ok(());
        }
        let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
        for link in &self.links {
            adjacency.entry(&link.from).or_default().push(&link.to);
            adjacency.entry(&link.to).or_default().push(&link.from);
        }
        let start = self
            .class_nodes
            .first()
            .map(|n| n.id.as_str())
            .or_else(|| self.data_nodes.first().map(|n| n.id.as_str()))
            .unwrap();
        let mut reached: HashSet<&str> = HashSet::new();
        let mut queue = vec![start];
        while let Some(id) = queue.pop() {
            if reached.insert(id) {
                queue.extend(adjacency.get(id).map(Vec::as_slice).unwrap_or_default());
            }
        }
        if reached.len() != total {
            return Err(self.invalid("model is not weakly connected"));
        }
        Ok(())
    }

    /// Every link property must be declared in the ontology (or be the
    /// karma:uri marker / rdfs:subClassOf).
    pub fn validate_with_ontology(&self, ontology: &Ontology) -> Result<()> {
        for link in &self.links {
            let p = link.property.as_str();
            if p == KARMA_URI || p == RDFS_SUBCLASS_OF {
                continue;
            }
            if !ontology.has_data_property(p) && !ontology.has_object_property(p) {
                return Err(self.invalid(format!("property `{p}` is not in the ontology")));
            }
        }
        Ok(())
    }

    /// Display names: class uri + 1-based ordinal in declaration order
    /// ("aac:Person1", "aac:Person2").
    pub fn default_numbering(&self) -> BTreeMap<String, String> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut numbering = BTreeMap::new();
        for node in &self.class_nodes {
            let n = counts.entry(node.class.as_str()).or_insert(0);
            *n += 1;
            numbering.insert(node.id.clone(), format!("{}{}", node.class, n));
        }
        numbering
    }

    /// Per class uri, the ids of its nodes in declaration order.
    pub fn class_groups(&self) -> BTreeMap<String, Vec<String>> {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for node in &self.class_nodes {
            groups.entry(node.class.clone()).or_default().push(node.id.clone());
        }
        groups
    }

    /// Reduce the model to its triple set under the given class-node
    /// numbering. Data nodes are labeled with their attribute name.
    pub fn rel(&self, numbering: &BTreeMap<String, String>) -> BTreeSet<Triple> {
        let data_labels: HashMap<&str, &str> = self
            .data_nodes
            .iter()
            .map(|n| (n.id.as_str(), n.attribute.as_str()))
            .collect();
        let label = |id: &str| -> String {
            if let Some(name) = numbering.get(id) {
                name.clone()
            } else if let Some(attr) = data_labels.get(id) {
                attr.to_string()
            } else {
                id.to_string()
            }
        };
        self.links
            .iter()
            .map(|l| (label(&l.from), label(&l.to), l.property.clone()))
            .collect()
    }

    /// rel restricted to internal links (class node to class node).
    pub fn rel_internal(&self, numbering: &BTreeMap<String, String>) -> BTreeSet<Triple> {
        let data_ids: HashSet<&str> = self.data_nodes.iter().map(|n| n.id.as_str()).collect();
        let internal = SemanticModel {
            id: self.id.clone(),
            class_nodes: self.class_nodes.clone(),
            data_nodes: Vec::new(),
            links: self
                .links
                .iter()
                .filter(|l| !data_ids.contains(l.to.as_str()))
                .cloned()
                .collect(),
        };
        internal.rel(numbering)
    }

    /// Gold semantic type per attribute: the class of the link source and
    /// the link property (karma:uri means a bare-class type).
    pub fn attribute_types(&self) -> BTreeMap<String, crate::labeling::SemanticType> {
        let class_of: HashMap<&str, &str> = self
            .class_nodes
            .iter()
            .map(|n| (n.id.as_str(), n.class.as_str()))
            .collect();
        let mut types = BTreeMap::new();
        for node in &self.data_nodes {
            if let Some(link) = self.links.iter().find(|l| l.to == node.id) {
                if let Some(&class) = class_of.get(link.from.as_str()) {
                    let t = if link.property == KARMA_URI {
                        crate::labeling::SemanticType::bare(class)
                    } else {
                        crate::labeling::SemanticType::with_property(class, &link.property)
                    };
                    types.insert(node.attribute.clone(), t);
                }
            }
        }
        types
    }

    /// Graphviz rendering for visual inspection.
    pub fn to_dot(&self) -> String {
        let numbering = self.default_numbering();
        let mut out = String::new();
        writeln!(out, "digraph \"{}\" {{", self.id).unwrap();
        writeln!(out, "  rankdir=TB;").unwrap();
        for node in &self.class_nodes {
            writeln!(
                out,
                "  \"{}\" [shape=ellipse, label=\"{}\"];",
                node.id, numbering[&node.id]
            )
            .unwrap();
        }
        for node in &self.data_nodes {
            writeln!(
                out,
                "  \"{}\" [shape=box, label=\"{}\"];",
                node.id, node.attribute
            )
            .unwrap();
        }
        for link in &self.links {
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                link.from, link.to, link.property
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Flat table of sample data from a source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTable {
    pub name: String,
    pub attributes: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Json,
}

impl SourceTable {
    /// Column values for one attribute.
    pub fn column(&self, attribute: &str) -> Option<Vec<String>> {
        let idx = self.attributes.iter().position(|a| a == attribute)?;
        Some(self.rows.iter().map(|r| r[idx].clone()).collect())
    }

    /// Load a source table; format inferred from the extension unless
    /// given. CSV requires a header row; JSON must be an array of flat
    /// objects (nested keys are flattened with a `.` separator, missing
    /// keys become empty strings).
    pub fn load(path: impl AsRef<Path>, format: Option<SourceFormat>) -> Result<SourceTable> {
        let path = path.as_ref();
        let format = format.unwrap_or_else(|| {
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => SourceFormat::Json,
                _ => SourceFormat::Csv,
            }
        });
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("source")
            .to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            SourceFormat::Csv => Self::from_csv(&name, &text),
            SourceFormat::Json => Self::from_json(&name, &text),
        }
    }

    pub fn from_csv(name: &str, text: &str) -> Result<SourceTable> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let attributes: Vec<String> = reader
            .headers()
            .map_err(|e| Error::InvalidSource {
                file: name.to_string(),
                detail: e.to_string(),
            })?
            .iter()
            .map(|h| h.to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidSource {
                file: name.to_string(),
                detail: e.to_string(),
            })?;
            if record.len() != attributes.len() {
                return Err(Error::RaggedRow {
                    name: name.to_string(),
                    row: i + 2, // 1-based, counting the header
                    got: record.len(),
                    expected: attributes.len(),
                });
            }
            rows.push(record.iter().map(|v| v.to_string()).collect());
        }
        Ok(SourceTable {
            name: name.to_string(),
            attributes,
            rows,
        })
    }

    pub fn from_json(name: &str, text: &str) -> Result<SourceTable> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedDocument {
                file: name.to_string(),
                detail: e.to_string(),
            })?;
        let items = value.as_array().ok_or_else(|| Error::InvalidSource {
            file: name.to_string(),
            detail: "JSON root must be an array of objects".to_string(),
        })?;

        let mut attributes: Vec<String> = Vec::new();
        let mut flat_rows: Vec<BTreeMap<String, String>> = Vec::new();
        for item in items {
            let obj = item.as_object().ok_or_else(|| Error::InvalidSource {
                file: name.to_string(),
                detail: "array items must be objects".to_string(),
            })?;
            let mut flat = BTreeMap::new();
            flatten_json("", obj, &mut flat, &mut |key| {
                if !attributes.iter().any(|a| a == key) {
                    attributes.push(key.to_string());
                }
            });
            flat_rows.push(flat);
        }

        let rows = flat_rows
            .into_iter()
            .map(|flat| {
                attributes
                    .iter()
                    .map(|a| flat.get(a).cloned().unwrap_or_default())
                    .collect()
            })
            .collect();
        Ok(SourceTable {
            name: name.to_string(),
            attributes,
            rows,
        })
    }
}

fn flatten_json(
    prefix: &str,
    obj: &serde_json::Map<String, serde_json::Value>,
    out: &mut BTreeMap<String, String>,
    record_key: &mut impl FnMut(&str),
) {
    for (key, value) in obj {
        let full = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            serde_json::Value::Object(nested) => flatten_json(&full, nested, out, record_key),
            serde_json::Value::Null => {
                record_key(&full);
                out.insert(full, String::new());
            }
            serde_json::Value::String(s) => {
                record_key(&full);
                out.insert(full, s.clone());
            }
            other => {
                record_key(&full);
                out.insert(full, other.to_string());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> SemanticModel {
        serde_json::from_str(
            r#"{
              "id": "tiny",
              "class_nodes": [
                {"id": "c1", "class": "ex:Work"},
                {"id": "c2", "class": "ex:Agent"}
              ],
              "data_nodes": [
                {"id": "d1", "attribute": "title"},
                {"id": "d2", "attribute": "name"}
              ],
              "links": [
                {"from": "c1", "to": "d1", "property": "ex:title"},
                {"from": "c1", "to": "c2", "property": "ex:creator"},
                {"from": "c2", "to": "d2", "property": "ex:name"}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn rel_has_one_triple_per_link() {
        let model = tiny_model();
        let rel = model.rel(&model.default_numbering());
        assert_eq!(rel.len(), model.links.len());
        assert!(rel.contains(&(
            "ex:Work1".to_string(),
            "ex:Agent1".to_string(),
            "ex:creator".to_string()
        )));
        assert!(rel.contains(&(
            "ex:Work1".to_string(),
            "title".to_string(),
            "ex:title".to_string()
        )));
    }

    #[test]
    fn rel_of_linkless_model_is_empty() {
        let model = SemanticModel {
            id: "empty".into(),
            class_nodes: vec![ClassNode {
                id: "c1".into(),
                class: "ex:Work".into(),
            }],
            data_nodes: vec![],
            links: vec![],
        };
        assert!(model.rel(&model.default_numbering()).is_empty());
    }

    #[test]
    fn duplicated_class_gets_ordinal_names() {
        let model: SemanticModel = serde_json::from_str(
            r#"{
              "id": "two-persons",
              "class_nodes": [
                {"id": "c1", "class": "ex:Work"},
                {"id": "c2", "class": "ex:Person"},
                {"id": "c3", "class": "ex:Person"}
              ],
              "data_nodes": [],
              "links": [
                {"from": "c1", "to": "c2", "property": "ex:creator"},
                {"from": "c2", "to": "c3", "property": "ex:knows"}
              ]
            }"#,
        )
        .unwrap();
        model.validate(Validation::Strict).unwrap();
        let numbering = model.default_numbering();
        assert_eq!(numbering["c2"], "ex:Person1");
        assert_eq!(numbering["c3"], "ex:Person2");
        let rel = model.rel(&numbering);
        assert!(rel.contains(&(
            "ex:Person1".to_string(),
            "ex:Person2".to_string(),
            "ex:knows".to_string()
        )));
    }

    #[test]
    fn save_load_round_trip_preserves_rel() {
        let model = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.model.json");
        model.save(&path).unwrap();
        let loaded = SemanticModel::load(&path).unwrap();
        assert_eq!(
            model.rel(&model.default_numbering()),
            loaded.rel(&loaded.default_numbering())
        );
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut model = tiny_model();
        model.links.push(ModelLink {
            from: "c1".into(),
            to: "ghost".into(),
            property: "ex:p".into(),
        });
        match model.validate(Validation::Strict) {
            Err(Error::DanglingReference { node, .. }) => assert_eq!(node, "ghost"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn data_node_needs_exactly_one_incoming_link() {
        let mut model = tiny_model();
        model.data_nodes.push(DataNode {
            id: "d3".into(),
            attribute: "orphan".into(),
        });
        assert!(model.validate(Validation::Strict).is_err());
    }

    #[test]
    fn multi_root_model_needs_relaxed_validation() {
        // Two class nodes both pointing at the same person: not a rooted
        // tree, but a legitimate comparison fixture.
        let model: SemanticModel = serde_json::from_str(
            r#"{
              "id": "multi-root",
              "class_nodes": [
                {"id": "c1", "class": "ex:Work"},
                {"id": "c2", "class": "ex:Person"},
                {"id": "c3", "class": "ex:Person"}
              ],
              "data_nodes": [],
              "links": [
                {"from": "c1", "to": "c2", "property": "ex:creator"},
                {"from": "c3", "to": "c2", "property": "ex:knows"}
              ]
            }"#,
        )
        .unwrap();
        assert!(model.validate(Validation::Strict).is_err());
        model.validate(Validation::Relaxed).unwrap();
    }

    #[test]
    fn csv_table_loads_in_header_order() {
        let table = SourceTable::from_csv("t", "a,b\n1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(table.attributes, ["a", "b"]);
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.column("b").unwrap(), ["2", "4", "6"]);
    }

    #[test]
    fn ragged_csv_rejected() {
        let err = SourceTable::from_csv("t", "a,b\n1\n").unwrap_err();
        assert!(matches!(err, Error::RaggedRow { .. }));
    }

    #[test]
    fn json_missing_keys_become_empty() {
        let table =
            SourceTable::from_json("t", r#"[{"a": 1}, {"a": 2, "b": 3}]"#).unwrap();
        assert_eq!(table.attributes, ["a", "b"]);
        assert_eq!(table.rows[0], ["1", ""]);
        assert_eq!(table.rows[1], ["2", "3"]);
    }

    #[test]
    fn json_nested_keys_flatten() {
        let table = SourceTable::from_json("t", r#"[{"a": {"b": "x"}, "c": "y"}]"#).unwrap();
        assert_eq!(table.attributes, ["a.b", "c"]);
        assert_eq!(table.rows[0], ["x", "y"]);
    }

    #[test]
    fn non_array_json_rejected() {
        assert!(SourceTable::from_json("t", r#"{"a": 1}"#).is_err());
    }
}
