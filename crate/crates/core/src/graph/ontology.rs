//! Classes, typed relations and axioms, plus admission-time type checking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Direction, KnowledgeGraph, NodeId, Triple, RDFS_NS, RDF_NS};

const BUILTIN: &str = include_str!("../../data/ontology.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    pub domain: String,
    pub range: String,
    /// Asymmetric relation whose extracted triples must carry the directional flag.
    #[serde(default)]
    pub directional: bool,
    /// Direction carried by the relation name itself (`improves`, `degrades`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implied_direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axiom {
    SubClassOf { sub: String, sup: String },
    ClassAssertion { individual: String, class: String },
    Irreflexive { relation: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("ontology document is not valid JSON: {0}")]
    Json(String),
    #[error("relation {relation} references undeclared class {class}")]
    UndeclaredClass { relation: String, class: String },
    #[error("axiom references undeclared {0}")]
    UndeclaredAxiomTerm(String),
    #[error("subclass graph has a cycle through {0}")]
    Cycle(String),
    #[error("relation {0} declared twice")]
    DuplicateRelation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct OntologySchema {
    classes: BTreeSet<String>,
    relations: BTreeMap<String, RelationDecl>,
    axioms: Vec<Axiom>,
    prefixes: BTreeMap<String, String>,
    /// Reflexive-transitive superclass sets, derived from the axioms.
    supers: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    classes: Vec<String>,
    relations: Vec<RelationDecl>,
    #[serde(default)]
    axioms: Vec<Axiom>,
    #[serde(default)]
    prefixes: BTreeMap<String, String>,
}

impl TryFrom<RawSchema> for OntologySchema {
    type Error = OntologyError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        OntologySchema::new(raw.classes, raw.relations, raw.axioms, raw.prefixes)
    }
}

impl From<OntologySchema> for RawSchema {
    fn from(s: OntologySchema) -> Self {
        RawSchema {
            classes: s.classes.into_iter().collect(),
            relations: s.relations.into_values().collect(),
            axioms: s.axioms,
            prefixes: s.prefixes,
        }
    }
}

impl OntologySchema {
    pub fn new(
        classes: impl IntoIterator<Item = String>,
        relations: impl IntoIterator<Item = RelationDecl>,
        axioms: Vec<Axiom>,
        prefixes: BTreeMap<String, String>,
    ) -> Result<Self, OntologyError> {
        let classes: BTreeSet<String> = classes.into_iter().collect();
        let mut rels = BTreeMap::new();
        for r in relations {
            for c in [&r.domain, &r.range] {
                if !classes.contains(c) {
                    return Err(OntologyError::UndeclaredClass { relation: r.name.clone(), class: c.clone() });
                }
            }
            if rels.insert(r.name.clone(), r.clone()).is_some() {
                return Err(OntologyError::DuplicateRelation(r.name));
            }
        }

        let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for ax in &axioms {
            match ax {
                Axiom::SubClassOf { sub, sup } => {
                    for c in [sub, sup] {
                        if !classes.contains(c) {
                            return Err(OntologyError::UndeclaredAxiomTerm(format!("class {c}")));
                        }
                    }
                    parents.entry(sub).or_default().insert(sup);
                }
                Axiom::ClassAssertion { class, .. } if !classes.contains(class) => {
                    return Err(OntologyError::UndeclaredAxiomTerm(format!("class {class}")));
                }
                Axiom::Irreflexive { relation } if !rels.contains_key(relation) => {
                    return Err(OntologyError::UndeclaredAxiomTerm(format!("relation {relation}")));
                }
                _ => {}
            }
        }

        let mut supers = BTreeMap::new();
        for c in &classes {
            // DFS from c; reaching c again through a proper ancestor is a cycle.
            let mut seen: BTreeSet<String> = BTreeSet::new();
            let mut stack: Vec<&str> = parents.get(c.as_str()).into_iter().flatten().copied().collect();
            while let Some(p) = stack.pop() {
                if p == c {
                    return Err(OntologyError::Cycle(c.clone()));
                }
                if seen.insert(p.to_string()) {
                    stack.extend(parents.get(p).into_iter().flatten().copied());
                }
            }
            seen.insert(c.clone());
            supers.insert(c.clone(), seen);
        }

        Ok(Self { classes, relations: rels, axioms, prefixes, supers })
    }

    /// The schema shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin ontology is well-formed")
    }

    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        serde_json::from_str(text).map_err(|e| OntologyError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationDecl> {
        self.relations.values()
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDecl> {
        self.relations.get(name)
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.contains(class)
    }

    /// Subclass test under reflexive-transitive closure.
    pub fn is_subclass(&self, sub: &str, sup: &str) -> bool {
        self.supers.get(sub).is_some_and(|s| s.contains(sup))
    }

    pub fn asserted_class(&self, individual: &str) -> Option<&str> {
        self.axioms.iter().find_map(|a| match a {
            Axiom::ClassAssertion { individual: i, class } if i == individual => Some(class.as_str()),
            _ => None,
        })
    }

    pub fn is_irreflexive(&self, relation: &str) -> bool {
        self.axioms
            .iter()
            .any(|a| matches!(a, Axiom::Irreflexive { relation: r } if r == relation))
    }

    /// Classes, relations and subclass axioms as an RDFS-flavored graph.
    pub fn to_graph(&self) -> KnowledgeGraph {
        let rdfs = |l: &str| NodeId::iri(format!("{RDFS_NS}{l}"));
        let mut g = KnowledgeGraph::new();
        for c in &self.classes {
            let _ = g.add_node(NodeId::term(c), Some(rdfs("Class")));
        }
        for r in self.relations.values() {
            let id = NodeId::term(&r.name);
            let _ = g.add_node(id.clone(), Some(NodeId::iri(format!("{RDF_NS}Property"))));
            g.add_edge(Triple::new(id.clone(), rdfs("domain"), NodeId::term(&r.domain)));
            g.add_edge(Triple::new(id, rdfs("range"), NodeId::term(&r.range)));
        }
        for ax in &self.axioms {
            match ax {
                Axiom::SubClassOf { sub, sup } => {
                    g.add_edge(Triple::new(NodeId::term(sub), rdfs("subClassOf"), NodeId::term(sup)))
                }
                Axiom::ClassAssertion { individual, class } => {
                    let _ = g.add_node(NodeId::term(individual), Some(NodeId::term(class)));
                }
                Axiom::Irreflexive { .. } => {}
            }
        }
        g
    }
}

/// A triple under admission, with optional class hints from the extractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleCandidate {
    pub subject: NodeId,
    pub relation: String,
    pub object: NodeId,
    pub subject_class: Option<String>,
    pub object_class: Option<String>,
}

impl TripleCandidate {
    pub fn new(subject: NodeId, relation: impl Into<String>, object: NodeId) -> Self {
        Self { subject, relation: relation.into(), object, subject_class: None, object_class: None }
    }

    pub fn with_classes(mut self, subject: Option<&str>, object: Option<&str>) -> Self {
        self.subject_class = subject.map(str::to_string);
        self.object_class = object.map(str::to_string);
        self
    }

    pub fn from_triple(t: &Triple) -> Option<Self> {
        Some(Self::new(t.subject.clone(), t.relation.term_name()?, t.object.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeReason {
    UnknownRelation,
    DomainViolation,
    RangeViolation,
    UnresolvedClass,
    IntegrityViolation,
}

impl TypeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeReason::UnknownRelation => "unknown-relation",
            TypeReason::DomainViolation => "domain-violation",
            TypeReason::RangeViolation => "range-violation",
            TypeReason::UnresolvedClass => "unresolved-class",
            TypeReason::IntegrityViolation => "integrity-violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeCheckResult {
    Accept,
    Reject { reason: TypeReason, detail: String },
}

impl TypeCheckResult {
    pub fn is_accept(&self) -> bool {
        matches!(self, TypeCheckResult::Accept)
    }

    pub fn reason(&self) -> Option<TypeReason> {
        match self {
            TypeCheckResult::Accept => None,
            TypeCheckResult::Reject { reason, .. } => Some(*reason),
        }
    }

    fn reject(reason: TypeReason, detail: String) -> Self {
        TypeCheckResult::Reject { reason, detail }
    }
}

/// Class resolution order: extractor hint, graph assignment, schema class assertion.
fn resolve_class(hint: Option<&str>, node: &NodeId, schema: &OntologySchema, graph: &KnowledgeGraph) -> Option<String> {
    if let Some(h) = hint {
        return Some(h.to_string());
    }
    if let Some(c) = graph.class_of(node).and_then(NodeId::term_name) {
        return Some(c.to_string());
    }
    node.term_name().and_then(|n| schema.asserted_class(n)).map(str::to_string)
}

pub fn check_triple(candidate: &TripleCandidate, schema: &OntologySchema, graph: &KnowledgeGraph) -> TypeCheckResult {
    let Some(rel) = schema.relation(&candidate.relation) else {
        return TypeCheckResult::reject(
            TypeReason::UnknownRelation,
            format!("relation `{}` is not declared", candidate.relation),
        );
    };
    let mut classes = [None, None];
    for (slot, (hint, node)) in classes.iter_mut().zip([
        (candidate.subject_class.as_deref(), &candidate.subject),
        (candidate.object_class.as_deref(), &candidate.object),
    ]) {
        match resolve_class(hint, node, schema, graph) {
            Some(c) if schema.has_class(&c) => *slot = Some(c),
            Some(c) => {
                return TypeCheckResult::reject(
                    TypeReason::UnresolvedClass,
                    format!("{node} has undeclared class `{c}`"),
                )
            }
            None => {
                return TypeCheckResult::reject(TypeReason::UnresolvedClass, format!("class of {node} is unknown"))
            }
        }
    }
    let [Some(sc), Some(oc)] = classes else { unreachable!("both slots resolved above") };
    if !schema.is_subclass(&sc, &rel.domain) {
        return TypeCheckResult::reject(
            TypeReason::DomainViolation,
            format!("{} is a {sc}, but {} expects {}", candidate.subject, rel.name, rel.domain),
        );
    }
    if !schema.is_subclass(&oc, &rel.range) {
        return TypeCheckResult::reject(
            TypeReason::RangeViolation,
            format!("{} is a {oc}, but {} expects {}", candidate.object, rel.name, rel.range),
        );
    }
    if candidate.subject == candidate.object && schema.is_irreflexive(&rel.name) {
        return TypeCheckResult::reject(
            TypeReason::IntegrityViolation,
            format!("{} is irreflexive", rel.name),
        );
    }
    TypeCheckResult::Accept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impact_nodes() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        g.add_typed(NodeId::term("Temperature"), "EnvironmentalFactor").unwrap();
        g.add_typed(NodeId::term("ImpactTempWrite"), "Impact").unwrap();
        g.add_typed(NodeId::term("ImpactTempRead"), "Impact").unwrap();
        g
    }

    #[test]
    fn builtin_schema_loads() {
        let s = OntologySchema::builtin();
        assert!(s.is_subclass("EnvironmentalFactor", "Concept"));
        assert!(s.is_subclass("EnvFrame", "Frame"));
        assert!(!s.is_subclass("Metric", "Factor"));
        let back = OntologySchema::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn environmental_factor_has_impact_is_accepted() {
        let c = TripleCandidate::new(NodeId::term("Temperature"), "hasImpact", NodeId::term("ImpactTempWrite"));
        assert_eq!(check_triple(&c, &OntologySchema::builtin(), &impact_nodes()), TypeCheckResult::Accept);
    }

    #[test]
    fn operation_as_comparison_subject_violates_domain() {
        // ReadIO resolves through the schema's class assertion.
        let c = TripleCandidate::new(NodeId::term("ReadIO"), "greaterImpactThan", NodeId::term("ImpactTempRead"));
        let r = check_triple(&c, &OntologySchema::builtin(), &impact_nodes());
        assert_eq!(r.reason(), Some(TypeReason::DomainViolation));
    }

    #[test]
    fn undeclared_relation_and_unknown_class() {
        let s = OntologySchema::builtin();
        let g = impact_nodes();
        let c = TripleCandidate::new(NodeId::term("Temperature"), "fooRel", NodeId::term("ImpactTempRead"));
        assert_eq!(check_triple(&c, &s, &g).reason(), Some(TypeReason::UnknownRelation));
        let c = TripleCandidate::new(NodeId::term("Mystery"), "hasImpact", NodeId::term("ImpactTempRead"));
        assert_eq!(check_triple(&c, &s, &g).reason(), Some(TypeReason::UnresolvedClass));
    }

    #[test]
    fn irreflexive_comparison() {
        let c = TripleCandidate::new(NodeId::term("ImpactTempRead"), "greaterImpactThan", NodeId::term("ImpactTempRead"));
        let r = check_triple(&c, &OntologySchema::builtin(), &impact_nodes());
        assert_eq!(r.reason(), Some(TypeReason::IntegrityViolation));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = OntologySchema::new(
            ["A".to_string(), "B".to_string()],
            [],
            vec![
                Axiom::SubClassOf { sub: "A".into(), sup: "B".into() },
                Axiom::SubClassOf { sub: "B".into(), sup: "A".into() },
            ],
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::Cycle(_)));
    }
}
