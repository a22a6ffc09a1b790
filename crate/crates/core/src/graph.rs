//! The alignment graph: a weighted, tagged, directed multigraph merged
//! from known semantic models, learned semantic types, and ontology
//! paths. Built in three passes, then weight-finalized; the finalized
//! graph is immutable and is the search space for candidate models.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labeling::LabelPrediction;
use crate::model::SemanticModel;
use crate::ontology::{Directness, Ontology, KARMA_URI, OWL_THING, RDFS_SUBCLASS_OF};

pub type NodeIndex = usize;
pub type LinkIndex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Class,
    Data,
}

/// Where a link came from, deciding its finalized weight class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Present in at least one known semantic model (tagged).
    Model,
    /// Added to complete a match for a learned semantic type.
    TypeAdded,
    /// Ontology property whose declaration literally covers both classes.
    OntologyDirect,
    /// Ontology property reachable only through the subclass hierarchy.
    OntologyInherited,
    /// Connection from the owl:Thing root restoring connectivity.
    SubclassRoot,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphNode {
    /// Deterministic id: `<label>#<ordinal>` in creation order.
    pub id: String,
    pub kind: NodeKind,
    /// Class uri for class nodes, attribute name for data nodes.
    pub label: String,
    /// Ids of the known models containing this node.
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphLink {
    pub id: LinkIndex,
    pub from: NodeIndex,
    pub to: NodeIndex,
    pub property: String,
    pub tags: BTreeSet<String>,
    pub provenance: Provenance,
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AlignmentGraph {
    nodes: Vec<GraphNode>,
    links: Vec<GraphLink>,
    model_ids: Vec<String>,
    label_ordinals: HashMap<String, usize>,
    out_links: Vec<Vec<LinkIndex>>,
    in_links: Vec<Vec<LinkIndex>>,
    finalized: bool,
}

impl AlignmentGraph {
    pub fn new() -> AlignmentGraph {
        AlignmentGraph::default()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[GraphLink] {
        &self.links
    }

    /// Number of known models merged in.
    pub fn model_count(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn node(&self, index: NodeIndex) -> &GraphNode {
        &self.nodes[index]
    }

    pub fn link(&self, index: LinkIndex) -> &GraphLink {
        &self.links[index]
    }

    pub fn out_links(&self, node: NodeIndex) -> &[LinkIndex] {
        &self.out_links[node]
    }

    pub fn in_links(&self, node: NodeIndex) -> &[LinkIndex] {
        &self.in_links[node]
    }

    pub fn node_by_id(&self, id: &str) -> Option<NodeIndex> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Class nodes with the given label, in creation order.
    pub fn class_nodes_labeled(&self, label: &str) -> Vec<NodeIndex> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Class && n.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    fn add_node(&mut self, kind: NodeKind, label: &str) -> NodeIndex {
        let ordinal = self.label_ordinals.entry(label.to_string()).or_insert(0);
        *ordinal += 1;
        self.nodes.push(GraphNode {
            id: format!("{label}#{ordinal}"),
            kind,
            label: label.to_string(),
            tags: BTreeSet::new(),
        });
        self.out_links.push(Vec::new());
        self.in_links.push(Vec::new());
        self.nodes.len() - 1
    }

    fn add_link(
        &mut self,
        from: NodeIndex,
        to: NodeIndex,
        property: &str,
        provenance: Provenance,
    ) -> LinkIndex {
        let id = self.links.len();
        self.links.push(GraphLink {
            id,
            from,
            to,
            property: property.to_string(),
            tags: BTreeSet::new(),
            provenance,
            weight: 0.0,
        });
        self.out_links[from].push(id);
        self.in_links[to].push(id);
        id
    }

    fn find_link(&self, from: NodeIndex, to: NodeIndex, property: &str) -> Option<LinkIndex> {
        self.out_links[from]
            .iter()
            .copied()
            .find(|&l| self.links[l].to == to && self.links[l].property == property)
    }

    /// Outgoing link of `from` with the given property that targets a
    /// data node. Construction keeps at most one per (node, property).
    fn data_target(&self, from: NodeIndex, property: &str) -> Option<NodeIndex> {
        self.out_links[from].iter().copied().find_map(|l| {
            let link = &self.links[l];
            (link.property == property && self.nodes[link.to].kind == NodeKind::Data)
                .then_some(link.to)
        })
    }

    /// Merge known semantic models into the graph. Class nodes map onto
    /// existing same-label nodes, preferring the unmapped candidate with
    /// the largest tag set (ties: oldest node); deficit copies are added
    /// so the graph holds at least as many same-label nodes as the model.
    /// Data nodes are reused through the (mapped class node, property)
    /// pair. Links merge by (source, target, property), accumulating the
    /// model id in their tags.
    pub fn add_known_models(&mut self, models: &[SemanticModel]) -> Result<()> {
        for model in models {
            if self.model_ids.iter().any(|id| id == &model.id) {
                return Err(Error::DuplicateModel {
                    id: model.id.clone(),
                });
            }

            // Per-model mapping from model node ids to graph nodes.
            let mut mapped: HashMap<&str, NodeIndex> = HashMap::new();

            for class_node in &model.class_nodes {
                let label = class_node.class.as_str();
                let in_model = model
                    .class_nodes
                    .iter()
                    .filter(|n| n.class == label)
                    .count();
                let in_graph = self.class_nodes_labeled(label).len();
                for _ in in_graph..in_model {
                    self.add_node(NodeKind::Class, label);
                }

                let used: HashSet<NodeIndex> = mapped.values().copied().collect();
                let candidates = self.class_nodes_labeled(label);
                let target = candidates
                    .iter()
                    .copied()
                    .filter(|i| !used.contains(i))
                    .max_by_key(|&i| (self.nodes[i].tags.len(), std::cmp::Reverse(i)))
                    .expect("deficit pass guarantees an unmapped candidate");
                mapped.insert(&class_node.id, target);
                self.nodes[target].tags.insert(model.id.clone());
            }

            let attribute_of: HashMap<&str, &str> = model
                .data_nodes
                .iter()
                .map(|n| (n.id.as_str(), n.attribute.as_str()))
                .collect();

            for link in &model.links {
                let Some(&attribute) = attribute_of.get(link.to.as_str()) else {
                    continue; // class-to-class links handled below
                };
                let source = mapped[link.from.as_str()];
                let target = match self.data_target(source, &link.property) {
                    Some(existing) => existing,
                    None => self.add_node(NodeKind::Data, attribute),
                };
                mapped.insert(&link.to, target);
                self.nodes[target].tags.insert(model.id.clone());
            }

            for link in &model.links {
                let source = mapped[link.from.as_str()];
                let target = mapped[link.to.as_str()];
                let index = self
                    .find_link(source, target, &link.property)
                    .unwrap_or_else(|| {
                        self.add_link(source, target, &link.property, Provenance::Model)
                    });
                self.links[index].tags.insert(model.id.clone());
            }

            self.model_ids.push(model.id.clone());
        }
        Ok(())
    }

    /// Add nodes and links so every predicted semantic type has a match:
    /// full matches are left alone, partial matches (class node without
    /// the required outgoing link) are completed with a new data node,
    /// and missing classes get a fresh class node first.
    pub fn add_semantic_types(&mut self, predictions: &[(String, Vec<LabelPrediction>)]) {
        for (attribute, ranked) in predictions {
            for prediction in ranked {
                let class_label = prediction.semantic_type.class.as_str();
                let property = prediction
                    .semantic_type
                    .property
                    .as_deref()
                    .unwrap_or(KARMA_URI);

                if self.class_nodes_labeled(class_label).is_empty() {
                    self.add_node(NodeKind::Class, class_label);
                }
                for class_node in self.class_nodes_labeled(class_label) {
                    if self.data_target(class_node, property).is_none() {
                        let data_node = self.add_node(NodeKind::Data, attribute);
                        self.add_link(class_node, data_node, property, Provenance::TypeAdded);
                    }
                }
            }
        }
    }

    /// Connect every ordered pair of class nodes with the ontology's
    /// direct and inherited properties, then, if the graph is still
    /// disconnected, add an owl:Thing root with a link to each class
    /// node that has no parent in the graph. Class-node labels not
    /// declared in the ontology are skipped.
    pub fn add_ontology_paths(&mut self, ontology: &Ontology) -> Result<()> {
        let class_nodes: Vec<NodeIndex> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Class)
            .map(|(i, _)| i)
            .collect();

        for &u in &class_nodes {
            for &v in &class_nodes {
                if u == v {
                    continue;
                }
                let (from_label, to_label) = (&self.nodes[u].label, &self.nodes[v].label);
                if !ontology.has_class(from_label) || !ontology.has_class(to_label) {
                    continue;
                }
                for (property, directness) in ontology.properties_between(from_label, to_label)? {
                    if self.find_link(u, v, &property).is_none() {
                        let provenance = match directness {
                            Directness::Direct => Provenance::OntologyDirect,
                            Directness::Inherited => Provenance::OntologyInherited,
                        };
                        self.add_link(u, v, &property, provenance);
                    }
                }
            }
        }

        if self.weakly_connected_components() > 1 {
            let root = self.add_node(NodeKind::Class, OWL_THING);
            for &u in &class_nodes {
                let has_parent = self.out_links[u].iter().any(|&l| {
                    self.links[l].property == RDFS_SUBCLASS_OF
                        && self.nodes[self.links[l].to].kind == NodeKind::Class
                });
                if !has_parent {
                    self.add_link(root, u, RDFS_SUBCLASS_OF, Provenance::SubclassRoot);
                }
            }
        }
        Ok(())
    }

    pub fn weakly_connected_components(&self) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut components = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut queue = vec![start];
            while let Some(node) = queue.pop() {
                if seen[node] {
                    continue;
                }
                seen[node] = true;
                for &l in &self.out_links[node] {
                    queue.push(self.links[l].to);
                }
                for &l in &self.in_links[node] {
                    queue.push(self.links[l].from);
                }
            }
        }
        components
    }

    /// Assign final weights. Tagged links get `w_l - |tags|/(n+1)` where
    /// n is the number of merged models; untagged links get
    /// `w_h = w_l * |E|` against the final link count, plus `epsilon`
    /// for inherited ontology links. Weights are order-independent.
    pub fn finalize_weights(&mut self, w_l: f64, epsilon: f64) {
        let n = self.model_ids.len() as f64;
        let w_h = w_l * self.links.len() as f64;
        for link in &mut self.links {
            link.weight = if link.tags.is_empty() {
                match link.provenance {
                    Provenance::OntologyInherited => w_h + epsilon,
                    _ => w_h,
                }
            } else {
                w_l - link.tags.len() as f64 / (n + 1.0)
            };
        }
        self.finalized = true;
    }

    /// Deterministic JSON dump for debugging and audits.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model_count": self.model_ids.len(),
            "models": self.model_ids,
            "nodes": self.nodes.iter().map(|n| serde_json::json!({
                "id": n.id,
                "kind": n.kind,
                "label": n.label,
                "tags": n.tags,
            })).collect::<Vec<_>>(),
            "links": self.links.iter().map(|l| serde_json::json!({
                "id": l.id,
                "from": self.nodes[l.from].id,
                "to": self.nodes[l.to].id,
                "property": l.property,
                "tags": l.tags,
                "provenance": l.provenance,
                "weight": l.weight,
            })).collect::<Vec<_>>(),
        })
    }

    /// Graphviz rendering with weight and tag annotations.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        writeln!(out, "digraph alignment {{").unwrap();
        writeln!(out, "  rankdir=TB;").unwrap();
        for node in &self.nodes {
            let shape = match node.kind {
                NodeKind::Class => "ellipse",
                NodeKind::Data => "box",
            };
            let tags = if node.tags.is_empty() {
                String::new()
            } else {
                format!(
                    "\\n[{}]",
                    node.tags.iter().cloned().collect::<Vec<_>>().join(",")
                )
            };
            writeln!(
                out,
                "  \"{}\" [shape={shape}, label=\"{}{tags}\"];",
                node.id, node.label
            )
            .unwrap();
        }
        for link in &self.links {
            let tags = if link.tags.is_empty() {
                String::new()
            } else {
                format!(
                    "\\n[{}]",
                    link.tags.iter().cloned().collect::<Vec<_>>().join(",")
                )
            };
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\\nw={:.3}{tags}\"];",
                self.nodes[link.from].id, self.nodes[link.to].id, link.property, link.weight
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}
