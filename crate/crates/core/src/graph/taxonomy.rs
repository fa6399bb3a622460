//! The concept tree and its synonym table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{KnowledgeGraph, NodeId, Triple};

const BUILTIN: &str = include_str!("../../data/taxonomy.json");

pub const ROOT: &str = "SSD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConceptStatus {
    #[default]
    Established,
    PendingProposal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub label: String,
    pub definition: String,
    pub parent: Option<String>,
    pub synonyms: Vec<String>,
    /// Ontology class; inherited from the nearest ancestor when absent.
    pub class: Option<String>,
    pub unit: Option<String>,
    /// `Low`, `High` or `Monitor`.
    pub ideal: Option<String>,
    pub status: ConceptStatus,
}

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("taxonomy document is not valid JSON: {0}")]
    Json(String),
    #[error("taxonomy root must be named {ROOT}, found {0}")]
    Root(String),
    #[error("concept name {0} appears more than once")]
    Duplicate(String),
    #[error("parent {0} is not in the taxonomy")]
    UnknownParent(String),
    #[error("concept name `{0}` must be non-empty and alphanumeric")]
    InvalidName(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
}

/// Nested document form, mirrored one-to-one with the tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConceptDoc {
    name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    label: String,
    #[serde(default)]
    definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ideal: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    synonyms: Vec<String>,
    #[serde(default, skip_serializing_if = "is_established")]
    status: ConceptStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<ConceptDoc>,
}

fn is_established(s: &ConceptStatus) -> bool {
    *s == ConceptStatus::Established
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyDoc {
    version: u64,
    root: ConceptDoc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    version: u64,
    /// Children keep insertion order so the document round-trips.
    concepts: BTreeMap<String, Concept>,
    children: BTreeMap<String, Vec<String>>,
    index: BTreeMap<String, String>,
}

/// Lowercase, `-`/`_` as spaces, whitespace collapsed.
pub fn normalize_key(s: &str) -> String {
    s.to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn compact_key(s: &str) -> String {
    normalize_key(s).replace(' ', "")
}

fn valid_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Taxonomy {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin taxonomy is well-formed")
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = serde_json::from_str(text).map_err(|e| TaxonomyError::Json(e.to_string()))?;
        if doc.root.name != ROOT {
            return Err(TaxonomyError::Root(doc.root.name));
        }
        let mut t = Taxonomy {
            version: doc.version,
            concepts: BTreeMap::new(),
            children: BTreeMap::new(),
            index: BTreeMap::new(),
        };
        let mut stack = vec![(doc.root, None::<String>)];
        while let Some((node, parent)) = stack.pop() {
            let ConceptDoc { name, label, definition, class, unit, ideal, synonyms, status, children } = node;
            if !valid_name(&name) {
                return Err(TaxonomyError::InvalidName(name));
            }
            if t.concepts.contains_key(&name) {
                return Err(TaxonomyError::Duplicate(name));
            }
            if let Some(p) = &parent {
                t.children.entry(p.clone()).or_default().push(name.clone());
            }
            let label = if label.is_empty() { name.clone() } else { label };
            t.concepts.insert(
                name.clone(),
                Concept { name: name.clone(), label, definition, parent, synonyms, class, unit, ideal, status },
            );
            for child in children.into_iter().rev() {
                stack.push((child, Some(name.clone())));
            }
        }
        t.rebuild_index();
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        let doc = TaxonomyDoc { version: self.version, root: self.doc_of(ROOT) };
        serde_json::to_string_pretty(&doc).expect("taxonomy serializes") + "\n"
    }

    fn doc_of(&self, name: &str) -> ConceptDoc {
        let c = &self.concepts[name];
        ConceptDoc {
            name: c.name.clone(),
            label: if c.label == c.name { String::new() } else { c.label.clone() },
            definition: c.definition.clone(),
            class: c.class.clone(),
            unit: c.unit.clone(),
            ideal: c.ideal.clone(),
            synonyms: c.synonyms.clone(),
            status: c.status,
            children: self.children_of(name).iter().map(|ch| self.doc_of(ch)).collect(),
        }
    }

    fn rebuild_index(&mut self) {
        // Names first, then labels, then synonyms: earlier entries win on collision.
        let mut index = BTreeMap::new();
        let established = || self.concepts.values().filter(|c| c.status == ConceptStatus::Established);
        for c in established() {
            index.entry(normalize_key(&c.name)).or_insert_with(|| c.name.clone());
            index.entry(compact_key(&c.name)).or_insert_with(|| c.name.clone());
        }
        for c in established() {
            index.entry(normalize_key(&c.label)).or_insert_with(|| c.name.clone());
            index.entry(compact_key(&c.label)).or_insert_with(|| c.name.clone());
        }
        for c in established() {
            for s in &c.synonyms {
                index.entry(normalize_key(s)).or_insert_with(|| c.name.clone());
            }
        }
        self.index = index;
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concept(&self, name: &str) -> Option<&Concept> {
        self.concepts.get(name)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.concepts.contains_key(name)
    }

    pub fn children_of(&self, name: &str) -> &[String] {
        self.children.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Root-first chain of names ending at `name`.
    pub fn ancestry(&self, name: &str) -> Option<Vec<&str>> {
        let mut chain = Vec::new();
        let mut cur = self.concepts.get(name)?;
        loop {
            chain.push(cur.name.as_str());
            match &cur.parent {
                Some(p) => cur = &self.concepts[p],
                None => break,
            }
        }
        chain.reverse();
        Some(chain)
    }

    /// `SSD/Metrics/Latency/P99Latency`
    pub fn path(&self, name: &str) -> Option<String> {
        self.ancestry(name).map(|a| a.join("/"))
    }

    /// Accepts a full slash path or a bare concept name.
    pub fn resolve_path(&self, path: &str) -> Option<&Concept> {
        let path = path.trim().trim_matches('/');
        let last = path.rsplit('/').next()?;
        let c = self.concepts.get(last)?;
        if path.contains('/') && self.path(last)? != path {
            return None;
        }
        Some(c)
    }

    /// Canonical established concept for a mention; pending concepts never match.
    pub fn normalize(&self, mention: &str) -> Option<&Concept> {
        let key = normalize_key(mention);
        let name = self.index.get(&key).or_else(|| self.index.get(&key.replace(' ', "")))?;
        self.concepts.get(name)
    }

    /// The concept's ontology class, inherited from ancestors, defaulting to `Concept`.
    pub fn class_of(&self, name: &str) -> Option<&str> {
        let chain = self.ancestry(name)?;
        Some(
            chain
                .iter()
                .rev()
                .find_map(|n| self.concepts[*n].class.as_deref())
                .unwrap_or("Concept"),
        )
    }

    /// Adds an established concept and bumps the version.
    pub fn add_concept(&mut self, concept: Concept) -> Result<u64, TaxonomyError> {
        if !valid_name(&concept.name) {
            return Err(TaxonomyError::InvalidName(concept.name));
        }
        if self.concepts.contains_key(&concept.name) {
            return Err(TaxonomyError::Duplicate(concept.name));
        }
        let parent = concept.parent.clone().ok_or_else(|| TaxonomyError::UnknownParent(String::new()))?;
        if !self.concepts.contains_key(&parent) {
            return Err(TaxonomyError::UnknownParent(parent));
        }
        self.children.entry(parent).or_default().push(concept.name.clone());
        self.concepts.insert(concept.name.clone(), Concept { status: ConceptStatus::Established, ..concept });
        self.version += 1;
        self.rebuild_index();
        Ok(self.version)
    }

    /// Concept nodes typed by their ontology class, linked child→parent by `ex:broader`.
    pub fn to_graph(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for c in self.concepts.values() {
            let id = NodeId::term(&c.name);
            let class = self.class_of(&c.name).unwrap_or("Concept");
            let _ = g.add_typed(id.clone(), class);
            g.set_property(&id, NodeId::term("label"), c.label.as_str());
            if !c.definition.is_empty() {
                g.set_property(&id, NodeId::term("definition"), c.definition.as_str());
            }
            for s in &c.synonyms {
                g.add_property(&id, NodeId::term("synonym"), s.as_str());
            }
            if let Some(p) = &c.parent {
                g.add_edge(Triple::new(id, NodeId::term("broader"), NodeId::term(p)));
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_rooted_and_round_trips() {
        let t = Taxonomy::builtin();
        assert_eq!(t.concept(ROOT).unwrap().parent, None);
        assert!(t.concepts().filter(|c| c.name != ROOT).all(|c| c.parent.is_some()));
        assert_eq!(Taxonomy::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn tail_latency_normalizes_to_p99() {
        let t = Taxonomy::builtin();
        let c = t.normalize("Tail  Latency").unwrap();
        assert_eq!(c.name, "P99Latency");
        assert_eq!(c.label, "p99 latency");
        assert_eq!(t.normalize("p99 latency").unwrap().name, "P99Latency");
        assert_eq!(t.normalize("P99Latency").unwrap().name, "P99Latency");
        assert!(t.normalize("read disturb margin").is_none());
    }

    #[test]
    fn paths_and_classes() {
        let t = Taxonomy::builtin();
        assert_eq!(t.path("P99Latency").unwrap(), "SSD/Metrics/Latency/P99Latency");
        assert_eq!(t.resolve_path("SSD/HardwareStack/FlashTechnology").unwrap().name, "FlashTechnology");
        assert!(t.resolve_path("SSD/Metrics/FlashTechnology").is_none());
        assert_eq!(t.class_of("Temperature"), Some("EnvironmentalFactor"));
        assert_eq!(t.class_of("Metrics"), Some("Concept"));
    }

    #[test]
    fn pending_concepts_never_match() {
        let doc = r#"{"version":3,"root":{"name":"SSD","definition":"","children":[
            {"name":"ReadDisturb","definition":"x","synonyms":["read disturb"],"status":"pending-proposal"}]}}"#;
        let t = Taxonomy::from_json(doc).unwrap();
        assert!(t.contains("ReadDisturb"));
        assert!(t.normalize("read disturb").is_none());
        assert!(t.normalize("ReadDisturb").is_none());
    }

    #[test]
    fn add_concept_bumps_version() {
        let mut t = Taxonomy::builtin();
        let v = t.version();
        let c = Concept {
            name: "ReadDisturb".into(),
            label: "read disturb".into(),
            definition: "Charge shift in neighbouring cells caused by repeated reads.".into(),
            parent: Some("FlashTechnology".into()),
            synonyms: vec![],
            class: None,
            unit: None,
            ideal: None,
            status: ConceptStatus::PendingProposal,
        };
        assert_eq!(t.add_concept(c.clone()).unwrap(), v + 1);
        assert_eq!(t.normalize("read disturb").unwrap().name, "ReadDisturb");
        assert_eq!(t.class_of("ReadDisturb"), Some("HardwareComponent"));
        assert_eq!(t.add_concept(c).unwrap_err(), TaxonomyError::Duplicate("ReadDisturb".into()));
    }
}
