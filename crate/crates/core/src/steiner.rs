//! Top-k Steiner tree enumeration and candidate-model ranking.
//!
//! One backward iterator per steiner node expands over the graph
//! (links traversable against their direction, so parallel links with
//! distinct labels stay independently reachable); a candidate tree is
//! emitted wherever all iterators meet, as the union of their paths to
//! the meeting node. Trees are acyclic connected link subsets spanning
//! the steiner nodes; for two or three steiner nodes the cheapest
//! emitted tree is the exact optimum.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{AlignmentGraph, GraphLink, LinkIndex, NodeIndex, NodeKind};
use crate::mapping::Mapping;
use crate::model::{ClassNode, DataNode, ModelLink, SemanticModel};

#[derive(Debug, Clone)]
pub struct SteinerTask {
    pub steiner_nodes: Vec<NodeIndex>,
    pub k: usize,
}

/// A candidate tree: link ids in canonical (sorted) order plus the sum
/// of their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTree {
    pub links: Vec<LinkIndex>,
    pub cost: f64,
}

/// A ranked candidate converted to a semantic model.
#[derive(Debug, Clone)]
pub struct RankedModel {
    pub model: SemanticModel,
    pub cost: f64,
    pub link_coherence: f64,
    pub mapping_score: f64,
    pub mapping_index: usize,
}

struct HeapEntry {
    distance: f64,
    /// 0 when the link shares a model tag with the link the path came
    /// through; the same-pattern preference applied on cost ties.
    discontinuity: u8,
    link: LinkIndex,
    node: NodeIndex,
    prev: NodeIndex,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for cheapest-first.
        other
            .distance
            .total_cmp(&self.distance)
            .then_with(|| other.discontinuity.cmp(&self.discontinuity))
            .then_with(|| other.link.cmp(&self.link))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn shares_tag(a: &GraphLink, b: &GraphLink) -> bool {
    a.tags.iter().any(|t| b.tags.contains(t))
}

struct Paths {
    distance: Vec<f64>,
    /// Link and neighbor through which each node was settled.
    parent: Vec<Option<(LinkIndex, NodeIndex)>>,
}

/// Cheapest undirected paths from `origin`, deterministic under ties
/// (pattern continuity first, then link id).
fn backward_paths(graph: &AlignmentGraph, origin: NodeIndex) -> Paths {
    let n = graph.nodes().len();
    let mut distance = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(LinkIndex, NodeIndex)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    distance[origin] = 0.0;
    heap.push(HeapEntry {
        distance: 0.0,
        discontinuity: 0,
        link: 0,
        node: origin,
        prev: origin,
    });

    while let Some(entry) = heap.pop() {
        if settled[entry.node] {
            continue;
        }
        settled[entry.node] = true;
        if entry.node != origin {
            distance[entry.node] = entry.distance;
            parent[entry.node] = Some((entry.link, entry.prev));
        }
        let via = (entry.node != origin).then(|| graph.link(entry.link));

        let neighbors = graph
            .in_links(entry.node)
            .iter()
            .map(|&l| (l, graph.link(l).from))
            .chain(
                graph
                    .out_links(entry.node)
                    .iter()
                    .map(|&l| (l, graph.link(l).to)),
            );
        for (link_index, neighbor) in neighbors {
            if settled[neighbor] {
                continue;
            }
            let link = graph.link(link_index);
            let next_distance = entry.distance + link.weight;
            if next_distance <= distance[neighbor] {
                distance[neighbor] = next_distance;
                let discontinuity = match via {
                    Some(previous) => u8::from(!shares_tag(link, previous)),
                    None => u8::from(link.tags.is_empty()),
                };
                heap.push(HeapEntry {
                    distance: next_distance,
                    discontinuity,
                    link: link_index,
                    node: neighbor,
                    prev: entry.node,
                });
            }
        }
    }
    Paths { distance, parent }
}

/// Attach each steiner node's path to the growing tree, stopping as soon
/// as the walk reaches a node already in the tree.
fn assemble(
    graph: &AlignmentGraph,
    meeting: NodeIndex,
    steiner_nodes: &[NodeIndex],
    paths: &[Paths],
) -> Option<BTreeSet<LinkIndex>> {
    let mut tree_nodes: HashSet<NodeIndex> = HashSet::from([meeting]);
    let mut tree_links: BTreeSet<LinkIndex> = BTreeSet::new();

    for (steiner, path) in steiner_nodes.iter().zip(paths) {
        if !path.distance[meeting].is_finite() {
            return None;
        }
        if tree_nodes.contains(steiner) {
            continue;
        }
        // Chain of (node, link) from the meeting node back to the origin.
        let mut chain: Vec<(NodeIndex, LinkIndex)> = Vec::new();
        let mut current = meeting;
        while current != *steiner {
            let (link, prev) = path.parent[current].expect("finite distance implies a path");
            chain.push((current, link));
            current = prev;
        }
        tree_nodes.insert(*steiner);
        for &(node, link) in chain.iter().rev() {
            tree_links.insert(link);
            if !tree_nodes.insert(node) {
                break;
            }
        }
    }

    prune_non_steiner_leaves(graph, &mut tree_links, steiner_nodes);
    Some(tree_links)
}

fn prune_non_steiner_leaves(
    graph: &AlignmentGraph,
    tree_links: &mut BTreeSet<LinkIndex>,
    steiner_nodes: &[NodeIndex],
) {
    let steiner: HashSet<NodeIndex> = steiner_nodes.iter().copied().collect();
    loop {
        let mut degree: HashMap<NodeIndex, usize> = HashMap::new();
        for &l in tree_links.iter() {
            *degree.entry(graph.link(l).from).or_insert(0) += 1;
            *degree.entry(graph.link(l).to).or_insert(0) += 1;
        }
        let removable: Vec<LinkIndex> = tree_links
            .iter()
            .copied()
            .filter(|&l| {
                let link = graph.link(l);
                (degree[&link.from] == 1 && !steiner.contains(&link.from))
                    || (degree[&link.to] == 1 && !steiner.contains(&link.to))
            })
            .collect();
        if removable.is_empty() {
            return;
        }
        for l in removable {
            tree_links.remove(&l);
        }
    }
}

fn tree_cost(graph: &AlignmentGraph, links: &BTreeSet<LinkIndex>) -> f64 {
    links.iter().map(|&l| graph.link(l).weight).sum()
}

/// Up to `k` candidate trees spanning the task's steiner nodes, in
/// non-decreasing cost order. Fewer than `k` trees is not an error;
/// an empty result means no meeting node connects all steiner nodes.
pub fn top_k_steiner(graph: &AlignmentGraph, task: &SteinerTask) -> Vec<CandidateTree> {
    assert!(task.k >= 1);
    assert!(graph.is_finalized(), "weights must be finalized");
    let paths: Vec<Paths> = task
        .steiner_nodes
        .iter()
        .map(|&s| backward_paths(graph, s))
        .collect();

    fn push(
        links: BTreeSet<LinkIndex>,
        graph: &AlignmentGraph,
        seen: &mut HashSet<Vec<LinkIndex>>,
        candidates: &mut Vec<CandidateTree>,
    ) {
        let canonical: Vec<LinkIndex> = links.iter().copied().collect();
        if seen.insert(canonical.clone()) {
            candidates.push(CandidateTree {
                cost: tree_cost(graph, &links),
                links: canonical,
            });
        }
    }

    let mut seen: HashSet<Vec<LinkIndex>> = HashSet::new();
    let mut candidates: Vec<CandidateTree> = Vec::new();

    for meeting in 0..graph.nodes().len() {
        if paths.iter().any(|p| !p.distance[meeting].is_finite()) {
            continue;
        }
        if let Some(links) = assemble(graph, meeting, &task.steiner_nodes, &paths) {
            push(links, graph, &mut seen, &mut candidates);
        }
    }

    // Parallel links between the same endpoints are alternatives the
    // shortest-path pass never picks; emit one-swap variants so they
    // appear among the candidates.
    let base: Vec<Vec<LinkIndex>> = candidates.iter().map(|t| t.links.clone()).collect();
    for links in base {
        for &link_index in &links {
            let link = graph.link(link_index);
            let endpoints = {
                let mut e = [link.from, link.to];
                e.sort();
                e
            };
            for (other_index, other) in graph.links().iter().enumerate() {
                if other_index == link_index {
                    continue;
                }
                let mut other_endpoints = [other.from, other.to];
                other_endpoints.sort();
                if other_endpoints != endpoints {
                    continue;
                }
                let mut variant: BTreeSet<LinkIndex> = links.iter().copied().collect();
                variant.remove(&link_index);
                if variant.insert(other_index) {
                    push(variant, graph, &mut seen, &mut candidates);
                }
            }
        }
    }

    candidates.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.links.cmp(&b.links)));
    candidates.truncate(task.k);
    candidates
}

/// Fraction of the tree's links supported by a single known model.
pub fn link_coherence(graph: &AlignmentGraph, tree: &CandidateTree) -> f64 {
    if tree.links.is_empty() {
        return 0.0;
    }
    let mut model_ids: BTreeSet<&str> = BTreeSet::new();
    for &l in &tree.links {
        model_ids.extend(graph.link(l).tags.iter().map(String::as_str));
    }
    let best = model_ids
        .into_iter()
        .map(|m| {
            tree.links
                .iter()
                .filter(|&&l| graph.link(l).tags.contains(m))
                .count()
        })
        .max()
        .unwrap_or(0);
    best as f64 / tree.links.len() as f64
}

/// Convert a tree to a semantic model: tree class nodes become class
/// nodes, tree data nodes keep the attribute their mapping match gave
/// them, links carry the graph properties.
pub fn tree_to_model(
    graph: &AlignmentGraph,
    tree: &CandidateTree,
    mapping: &Mapping,
    id: &str,
) -> SemanticModel {
    let mut node_ids: BTreeSet<NodeIndex> = BTreeSet::new();
    for &l in &tree.links {
        node_ids.insert(graph.link(l).from);
        node_ids.insert(graph.link(l).to);
    }
    let attribute_of: HashMap<NodeIndex, &str> = mapping
        .matches
        .iter()
        .map(|m| (m.data_node, m.attribute.as_str()))
        .collect();

    let mut class_nodes = Vec::new();
    let mut data_nodes = Vec::new();
    for &n in &node_ids {
        let node = graph.node(n);
        match node.kind {
            NodeKind::Class => class_nodes.push(ClassNode {
                id: node.id.clone(),
                class: node.label.clone(),
            }),
            NodeKind::Data => data_nodes.push(DataNode {
                id: node.id.clone(),
                attribute: attribute_of
                    .get(&n)
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| node.label.clone()),
            }),
        }
    }
    let links = tree
        .links
        .iter()
        .map(|&l| {
            let link = graph.link(l);
            ModelLink {
                from: graph.node(link.from).id.clone(),
                to: graph.node(link.to).id.clone(),
                property: link.property.clone(),
            }
        })
        .collect();
    SemanticModel {
        id: id.to_string(),
        class_nodes,
        data_nodes,
        links,
    }
}

/// Rank trees from all mappings into candidate models: link coherence
/// descending, then cost ascending, then mapping score descending, then
/// canonical link order. Candidates with the same triple set collapse
/// into the best-ranked one.
pub fn rank_candidates(
    graph: &AlignmentGraph,
    trees: &[(CandidateTree, usize)],
    mappings: &[Mapping],
    source_id: &str,
) -> Result<Vec<RankedModel>> {
    if trees.is_empty() {
        return Err(Error::NoModel {
            detail: "no steiner tree spans any candidate mapping".to_string(),
        });
    }
    let mut scored: Vec<(f64, f64, f64, &CandidateTree, usize)> = trees
        .iter()
        .map(|(tree, mapping_index)| {
            (
                link_coherence(graph, tree),
                tree.cost,
                mappings[*mapping_index].score,
                tree,
                *mapping_index,
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.total_cmp(&b.1))
            .then_with(|| b.2.total_cmp(&a.2))
            .then_with(|| a.3.links.cmp(&b.3.links))
    });

    let mut seen_rel = HashSet::new();
    let mut ranked = Vec::new();
    for (coherence, cost, mapping_score, tree, mapping_index) in scored {
        let model = tree_to_model(
            graph,
            tree,
            &mappings[mapping_index],
            &format!("{source_id}:candidate{}", ranked.len() + 1),
        );
        let rel = model.rel(&model.default_numbering());
        if seen_rel.insert(rel) {
            ranked.push(RankedModel {
                model,
                cost,
                link_coherence: coherence,
                mapping_score,
                mapping_index,
            });
        }
    }
    Ok(ranked)
}
