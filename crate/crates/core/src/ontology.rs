//! Domain-ontology store: classes, subclass hierarchy, and property
//! domain/range declarations, loaded from one or more JSON documents.
//!
//! The store answers the two queries graph construction needs: the
//! superclass closure of a class and the set of properties (direct or
//! inherited through the hierarchy) connecting two classes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root class every declared class is implicitly a subclass of.
pub const OWL_THING: &str = "owl:Thing";
/// Pseudo-property reported for subclass connections.
pub const RDFS_SUBCLASS_OF: &str = "rdfs:subClassOf";
/// Link label marking that an attribute holds instance URIs of a class.
pub const KARMA_URI: &str = "karma:uri";

/// Prefixes usable without a declaration in the document header.
const BUILTIN_PREFIXES: &[&str] = &["owl", "rdfs", "rdf", "karma", "xsd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Object,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyClass {
    pub uri: String,
    /// Declared direct superclasses, in document order.
    pub subclass_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyProperty {
    pub uri: String,
    pub kind: PropertyKind,
    /// Empty means unrestricted (treated as domain owl:Thing).
    pub domains: Vec<String>,
    /// Empty means unrestricted (treated as range owl:Thing).
    pub ranges: Vec<String>,
}

/// Whether a property connects two classes via its literal declaration or
/// only through the subclass hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directness {
    Direct,
    Inherited,
}

/// Union of the loaded ontology documents. Immutable after load; all
/// queries are read-only and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Ontology {
    classes: Vec<OntologyClass>,
    class_index: HashMap<String, usize>,
    properties: Vec<OntologyProperty>,
    subclass_edges: BTreeSet<(String, String)>,
    closures: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct OntologyDoc {
    #[serde(default)]
    prefixes: BTreeMap<String, String>,
    #[serde(default)]
    classes: Vec<ClassDecl>,
    #[serde(default)]
    properties: Vec<PropertyDecl>,
}

#[derive(Deserialize)]
struct ClassDecl {
    uri: String,
    #[serde(default)]
    subclass_of: Vec<String>,
}

#[derive(Deserialize)]
struct PropertyDecl {
    uri: String,
    kind: PropertyKind,
    #[serde(default)]
    domains: Vec<String>,
    #[serde(default)]
    ranges: Vec<String>,
}

fn check_prefix(uri: &str, prefixes: &BTreeMap<String, String>, file: &str) -> Result<()> {
    let prefix = uri.split(':').next().unwrap_or("");
    if prefix.is_empty() || uri.split(':').count() < 2 {
        return Err(Error::MalformedDocument {
            file: file.to_string(),
            detail: format!("`{uri}` is not a prefixed name"),
        });
    }
    if BUILTIN_PREFIXES.contains(&prefix) || prefixes.contains_key(prefix) {
        Ok(())
    } else {
        Err(Error::MalformedDocument {
            file: file.to_string(),
            detail: format!("`{uri}` uses undeclared prefix `{prefix}`"),
        })
    }
}

impl Ontology {
    /// Load and union one or more ontology documents. Duplicate class
    /// declarations merge (superclass lists union, document order kept);
    /// duplicate property declarations of the same kind union their
    /// domains and ranges.
    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Ontology> {
        let mut docs = Vec::new();
        for path in paths {
            let path = path.as_ref();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            docs.push((path.display().to_string(), text));
        }
        Self::from_documents(&docs)
    }

    /// Same as [`Ontology::load`] for already-read documents, given as
    /// (name, json text) pairs. The name is used in error messages.
    pub fn from_documents(docs: &[(String, String)]) -> Result<Ontology> {
        let mut classes: Vec<OntologyClass> = Vec::new();
        let mut class_index: HashMap<String, usize> = HashMap::new();
        let mut properties: Vec<OntologyProperty> = Vec::new();
        let mut prop_index: HashMap<(String, PropertyKind), usize> = HashMap::new();

        for (file, text) in docs {
            let doc: OntologyDoc =
                serde_json::from_str(text).map_err(|e| Error::MalformedDocument {
                    file: file.clone(),
                    detail: format!("line {}, column {}: {}", e.line(), e.column(), e),
                })?;

            for class in &doc.classes {
                check_prefix(&class.uri, &doc.prefixes, file)?;
                for parent in &class.subclass_of {
                    check_prefix(parent, &doc.prefixes, file)?;
                }
                let idx = *class_index.entry(class.uri.clone()).or_insert_with(|| {
                    classes.push(OntologyClass {
                        uri: class.uri.clone(),
                        subclass_of: Vec::new(),
                    });
                    classes.len() - 1
                });
                for parent in &class.subclass_of {
                    if parent != &class.uri && !classes[idx].subclass_of.contains(parent) {
                        classes[idx].subclass_of.push(parent.clone());
                    }
                }
            }

            for prop in &doc.properties {
                check_prefix(&prop.uri, &doc.prefixes, file)?;
                for uri in prop.domains.iter().chain(&prop.ranges) {
                    check_prefix(uri, &doc.prefixes, file)?;
                }
                let key = (prop.uri.clone(), prop.kind);
                let idx = *prop_index.entry(key).or_insert_with(|| {
                    properties.push(OntologyProperty {
                        uri: prop.uri.clone(),
                        kind: prop.kind,
                        domains: Vec::new(),
                        ranges: Vec::new(),
                    });
                    properties.len() - 1
                });
                for d in &prop.domains {
                    if !properties[idx].domains.contains(d) {
                        properties[idx].domains.push(d.clone());
                    }
                }
                for r in &prop.ranges {
                    if !properties[idx].ranges.contains(r) {
                        properties[idx].ranges.push(r.clone());
                    }
                }
            }
        }

        let mut subclass_edges = BTreeSet::new();
        for class in &classes {
            for parent in &class.subclass_of {
                subclass_edges.insert((class.uri.clone(), parent.clone()));
            }
        }

        let mut ontology = Ontology {
            classes,
            class_index,
            properties,
            subclass_edges,
            closures: HashMap::new(),
        };
        ontology.check_acyclic()?;
        ontology.memoize_closures();
        Ok(ontology)
    }

    fn check_acyclic(&self) -> Result<()> {
        fn visit<'a>(
            ontology: &'a Ontology,
            uri: &'a str,
            path: &mut Vec<&'a str>,
            done: &mut HashSet<&'a str>,
        ) -> Result<()> {
            if done.contains(uri) {
                return Ok(());
            }
            if let Some(start) = path.iter().position(|&p| p == uri) {
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(uri.to_string());
                return Err(Error::SubclassCycle { cycle });
            }
            path.push(uri);
            if let Some(&idx) = ontology.class_index.get(uri) {
                for parent in &ontology.classes[idx].subclass_of {
                    visit(ontology, parent, path, done)?;
                }
            }
            path.pop();
            done.insert(uri);
            Ok(())
        }

        let mut done: HashSet<&str> = HashSet::new();
        for class in &self.classes {
            visit(self, &class.uri, &mut Vec::new(), &mut done)?;
        }
        Ok(())
    }

    fn memoize_closures(&mut self) {
        let mut closures = HashMap::new();
        for class in &self.classes {
            closures.insert(class.uri.clone(), self.compute_closure(&class.uri));
        }
        closures.insert(OWL_THING.to_string(), Vec::new());
        self.closures = closures;
    }

    // Breadth-first over declared superclass edges in insertion order,
    // excluding the class itself; owl:Thing always comes last.
    fn compute_closure(&self, uri: &str) -> Vec<String> {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut order: Vec<String> = Vec::new();
        let mut queue: Vec<&str> = vec![uri];
        let mut head = 0;
        while head < queue.len() {
            let current = queue[head];
            head += 1;
            if let Some(&idx) = self.class_index.get(current) {
                for parent in &self.classes[idx].subclass_of {
                    if parent != uri && parent != OWL_THING && seen.insert(parent) {
                        order.push(parent.clone());
                        queue.push(parent);
                    }
                }
            }
        }
        order.push(OWL_THING.to_string());
        order
    }

    pub fn classes(&self) -> &[OntologyClass] {
        &self.classes
    }

    pub fn properties(&self) -> &[OntologyProperty] {
        &self.properties
    }

    pub fn subclass_edges(&self) -> &BTreeSet<(String, String)> {
        &self.subclass_edges
    }

    /// owl:Thing is always known, whether or not it was declared.
    pub fn has_class(&self, uri: &str) -> bool {
        uri == OWL_THING || self.class_index.contains_key(uri)
    }

    pub fn has_data_property(&self, uri: &str) -> bool {
        self.properties
            .iter()
            .any(|p| p.uri == uri && p.kind == PropertyKind::Data)
    }

    pub fn has_object_property(&self, uri: &str) -> bool {
        self.properties
            .iter()
            .any(|p| p.uri == uri && p.kind == PropertyKind::Object)
    }

    /// All strict ancestors of `uri` plus owl:Thing, breadth-first in
    /// declaration order.
    pub fn superclass_closure(&self, uri: &str) -> Result<&[String]> {
        self.closures
            .get(uri)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEntity {
                kind: "class",
                uri: uri.to_string(),
            })
    }

    fn closure_set<'a>(&'a self, uri: &'a str) -> Result<HashSet<&'a str>> {
        let mut set: HashSet<&str> = self
            .superclass_closure(uri)?
            .iter()
            .map(String::as_str)
            .collect();
        set.insert(uri);
        Ok(set)
    }

    /// Object properties (and the rdfs:subClassOf pseudo-property)
    /// connecting `c1` to `c2`, directly or through the subclass
    /// hierarchy. Data properties never connect two classes. Each
    /// property is reported once with its strongest directness; the
    /// list is sorted direct-first, then by uri.
    pub fn properties_between(&self, c1: &str, c2: &str) -> Result<Vec<(String, Directness)>> {
        let from = self.closure_set(c1)?;
        let to = self.closure_set(c2)?;

        let mut result: Vec<(String, Directness)> = Vec::new();
        for prop in &self.properties {
            if prop.kind != PropertyKind::Object {
                continue;
            }
            let domain_ok = if prop.domains.is_empty() {
                true
            } else {
                prop.domains.iter().any(|d| from.contains(d.as_str()))
            };
            let range_ok = if prop.ranges.is_empty() {
                true
            } else {
                prop.ranges.iter().any(|r| to.contains(r.as_str()))
            };
            if !(domain_ok && range_ok) {
                continue;
            }
            let direct = prop.domains.iter().any(|d| d == c1)
                && prop.ranges.iter().any(|r| r == c2);
            let directness = if direct {
                Directness::Direct
            } else {
                Directness::Inherited
            };
            match result.iter_mut().find(|(uri, _)| uri == &prop.uri) {
                Some(entry) => {
                    if directness == Directness::Direct {
                        entry.1 = Directness::Direct;
                    }
                }
                None => result.push((prop.uri.clone(), directness)),
            }
        }

        if c2 != c1 && self.superclass_closure(c1)?.iter().any(|p| p == c2) {
            let direct = self
                .subclass_edges
                .contains(&(c1.to_string(), c2.to_string()));
            result.push((
                RDFS_SUBCLASS_OF.to_string(),
                if direct {
                    Directness::Direct
                } else {
                    Directness::Inherited
                },
            ));
        }

        result.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(name: &str, json: &str) -> (String, String) {
        (name.to_string(), json.to_string())
    }

    #[test]
    fn minimal_document_one_class() {
        let o = Ontology::from_documents(&[doc(
            "min.json",
            r#"{"prefixes": {"foaf": "http://xmlns.com/foaf/0.1/"},
                "classes": [{"uri": "foaf:Person"}]}"#,
        )])
        .unwrap();
        assert_eq!(o.classes().len(), 1);
        assert_eq!(o.properties().len(), 0);
        assert_eq!(o.superclass_closure("foaf:Person").unwrap(), [OWL_THING]);
    }

    #[test]
    fn union_merges_duplicate_classes() {
        let d1 = doc(
            "a.json",
            r#"{"prefixes": {"skos": "http://www.w3.org/2004/02/skos/core#"},
                "classes": [{"uri": "skos:Concept"}]}"#,
        );
        let d2 = doc(
            "b.json",
            r#"{"prefixes": {"skos": "http://www.w3.org/2004/02/skos/core#"},
                "classes": [{"uri": "skos:Concept"}]}"#,
        );
        let o = Ontology::from_documents(&[d1, d2]).unwrap();
        assert_eq!(o.classes().len(), 1);
    }

    #[test]
    fn union_merges_property_domains() {
        let d1 = doc(
            "a.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [{"uri": "ex:A"}, {"uri": "ex:B"}],
                "properties": [{"uri": "ex:p", "kind": "object", "domains": ["ex:A"], "ranges": ["ex:B"]}]}"#,
        );
        let d2 = doc(
            "b.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [{"uri": "ex:C"}],
                "properties": [{"uri": "ex:p", "kind": "object", "domains": ["ex:C"], "ranges": ["ex:B"]}]}"#,
        );
        let o = Ontology::from_documents(&[d1, d2]).unwrap();
        assert_eq!(o.properties().len(), 1);
        assert_eq!(o.properties()[0].domains, ["ex:A", "ex:C"]);
    }

    #[test]
    fn parse_failure_names_file_and_location() {
        let err = Ontology::from_documents(&[doc("broken.json", "{ not json")]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("broken.json"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn undeclared_prefix_rejected() {
        let err = Ontology::from_documents(&[doc(
            "p.json",
            r#"{"classes": [{"uri": "nope:Thing"}]}"#,
        )])
        .unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn subclass_cycle_reported_with_path() {
        let err = Ontology::from_documents(&[doc(
            "cyc.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [
                  {"uri": "ex:A", "subclass_of": ["ex:B"]},
                  {"uri": "ex:B", "subclass_of": ["ex:C"]},
                  {"uri": "ex:C", "subclass_of": ["ex:A"]}]}"#,
        )])
        .unwrap_err();
        match err {
            Error::SubclassCycle { cycle } => {
                assert!(cycle.len() >= 3, "{cycle:?}");
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("expected cycle error, got {other}"),
        }
    }

    #[test]
    fn closure_is_transitive_and_strict() {
        let o = Ontology::from_documents(&[doc(
            "chain.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [
                  {"uri": "ex:A", "subclass_of": ["ex:B"]},
                  {"uri": "ex:B", "subclass_of": ["ex:C"]},
                  {"uri": "ex:C"}]}"#,
        )])
        .unwrap();
        assert_eq!(
            o.superclass_closure("ex:A").unwrap(),
            ["ex:B", "ex:C", OWL_THING]
        );
        assert!(!o.superclass_closure("ex:A").unwrap().contains(&"ex:A".to_string()));
    }

    #[test]
    fn unknown_class_errors() {
        let o = Ontology::from_documents(&[doc(
            "min.json",
            r#"{"prefixes": {"ex": "http://example.org/"}, "classes": [{"uri": "ex:A"}]}"#,
        )])
        .unwrap();
        assert!(o.superclass_closure("ex:Missing").is_err());
        assert!(o.properties_between("ex:A", "ex:Missing").is_err());
    }

    #[test]
    fn no_self_properties_means_empty_list() {
        let o = Ontology::from_documents(&[doc(
            "min.json",
            r#"{"prefixes": {"ex": "http://example.org/"}, "classes": [{"uri": "ex:A"}]}"#,
        )])
        .unwrap();
        assert!(o.properties_between("ex:A", "ex:A").unwrap().is_empty());
    }

    #[test]
    fn unrestricted_property_applies_everywhere() {
        let o = Ontology::from_documents(&[doc(
            "u.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [{"uri": "ex:A"}, {"uri": "ex:B"}],
                "properties": [{"uri": "ex:anything", "kind": "object"}]}"#,
        )])
        .unwrap();
        let props = o.properties_between("ex:A", "ex:B").unwrap();
        assert_eq!(props, [("ex:anything".to_string(), Directness::Inherited)]);
    }

    #[test]
    fn subclass_link_included_with_directness() {
        let o = Ontology::from_documents(&[doc(
            "s.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [
                  {"uri": "ex:A", "subclass_of": ["ex:B"]},
                  {"uri": "ex:B", "subclass_of": ["ex:C"]},
                  {"uri": "ex:C"}]}"#,
        )])
        .unwrap();
        assert_eq!(
            o.properties_between("ex:A", "ex:B").unwrap(),
            [(RDFS_SUBCLASS_OF.to_string(), Directness::Direct)]
        );
        assert_eq!(
            o.properties_between("ex:A", "ex:C").unwrap(),
            [(RDFS_SUBCLASS_OF.to_string(), Directness::Inherited)]
        );
        assert!(o.properties_between("ex:B", "ex:A").unwrap().is_empty());
    }

    #[test]
    fn data_properties_never_connect_classes() {
        let o = Ontology::from_documents(&[doc(
            "d.json",
            r#"{"prefixes": {"ex": "http://example.org/"},
                "classes": [{"uri": "ex:A"}, {"uri": "ex:B"}],
                "properties": [{"uri": "ex:label", "kind": "data", "domains": ["ex:A"]}]}"#,
        )])
        .unwrap();
        assert!(o.properties_between("ex:A", "ex:B").unwrap().is_empty());
        assert!(o.has_data_property("ex:label"));
    }
}
