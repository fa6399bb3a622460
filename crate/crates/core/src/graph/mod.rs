//! Typed knowledge-graph model shared by the literature graph and the per-window data graphs.
//!
//! A [`KnowledgeGraph`] is a value: nodes with at most one class, literal-valued node
//! properties, and labeled edges. Each edge may carry any number of provenance-keyed
//! annotations (confidence, retrieval weight, direction, context). Persistence goes
//! through [`turtle`], querying through [`query`], admission checks through [`ontology`].

pub mod lexer;
pub mod ontology;
pub mod query;
pub mod taxonomy;
pub mod turtle;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use ontology::{check_triple, OntologySchema, TripleCandidate, TypeCheckResult, TypeReason};
pub use query::{evaluate_pattern, BindingSet, GraphPattern, PatternTerm, TriplePattern};
pub use taxonomy::{Concept, ConceptStatus, Taxonomy};
pub use turtle::{parse_turtle, serialize_turtle, TurtleConfig};

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Identifier of a graph node or relation.
///
/// `Term` lives in the shared vocabulary namespace (`<base>/ssd#Name`), `Data` in the
/// data namespace (`<base>/data#kind/stable-id`), and `Iri` is any other absolute IRI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Term(String),
    Data(String),
    Iri(String),
}

impl NodeId {
    pub fn term(name: impl Into<String>) -> Self {
        NodeId::Term(name.into())
    }

    /// Data node id `kind/<percent-encoded id>`.
    pub fn data(kind: &str, id: &str) -> Self {
        NodeId::Data(format!("{kind}/{}", percent_encode(id)))
    }

    pub fn iri(iri: impl Into<String>) -> Self {
        NodeId::Iri(iri.into())
    }

    pub fn rdf_type() -> Self {
        NodeId::Iri(RDF_TYPE.to_string())
    }

    /// Local name for vocabulary terms.
    pub fn term_name(&self) -> Option<&str> {
        match self {
            NodeId::Term(n) => Some(n),
            _ => None,
        }
    }

    /// Data kind (`frame`, `window`, ...) for data nodes.
    pub fn data_kind(&self) -> Option<&str> {
        match self {
            NodeId::Data(local) => local.split('/').next(),
            _ => None,
        }
    }

    /// Full IRI under the given base.
    pub fn to_iri(&self, base: &str) -> String {
        match self {
            NodeId::Term(n) => format!("{base}/ssd#{n}"),
            NodeId::Data(l) => format!("{base}/data#{l}"),
            NodeId::Iri(i) => i.clone(),
        }
    }

    /// Inverse of [`NodeId::to_iri`].
    pub fn from_iri(iri: &str, base: &str) -> Self {
        let ssd = format!("{base}/ssd#");
        let data = format!("{base}/data#");
        if let Some(rest) = iri.strip_prefix(&ssd) {
            NodeId::Term(rest.to_string())
        } else if let Some(rest) = iri.strip_prefix(&data) {
            NodeId::Data(rest.to_string())
        } else {
            NodeId::Iri(iri.to_string())
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Term(n) => write!(f, "ex:{n}"),
            NodeId::Data(l) => write!(f, "data:{l}"),
            NodeId::Iri(i) => write!(f, "<{i}>"),
        }
    }
}

impl FromStr for NodeId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("ex:") {
            Ok(NodeId::Term(n.to_string()))
        } else if let Some(l) = s.strip_prefix("data:") {
            Ok(NodeId::Data(l.to_string()))
        } else if let Some(i) = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')) {
            Ok(NodeId::Iri(i.to_string()))
        } else {
            Err(GraphError::InvalidNodeId(s.to_string()))
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Percent-encodes everything outside the RFC 3986 unreserved set.
pub fn percent_encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for b in raw.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn percent_decode(enc: &str) -> String {
    let bytes = enc.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&enc[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Literal property value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Integer(i64),
    Number(f64),
    Text(String),
}

impl Literal {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Integer(i) => Some(*i as f64),
            Literal::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Text(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Literal::Bool(_) => 0,
            Literal::Integer(_) => 1,
            Literal::Number(_) => 2,
            Literal::Text(_) => 3,
        }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Literal {}

impl std::hash::Hash for Literal {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Literal::Bool(b) => b.hash(state),
            Literal::Integer(i) => i.hash(state),
            // total_cmp equality is bit equality
            Literal::Number(x) => x.to_bits().hash(state),
            Literal::Text(t) => t.hash(state),
        }
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Literal::Bool(a), Literal::Bool(b)) => a.cmp(b),
            (Literal::Integer(a), Literal::Integer(b)) => a.cmp(b),
            (Literal::Number(a), Literal::Number(b)) => a.total_cmp(b),
            (Literal::Text(a), Literal::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Number(x) => write!(f, "{x}"),
            Literal::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for Literal {
    fn from(v: f64) -> Self {
        Literal::Number(v)
    }
}
impl From<i64> for Literal {
    fn from(v: i64) -> Self {
        Literal::Integer(v)
    }
}
impl From<u32> for Literal {
    fn from(v: u32) -> Self {
        Literal::Integer(v as i64)
    }
}
impl From<usize> for Literal {
    fn from(v: usize) -> Self {
        Literal::Integer(v as i64)
    }
}
impl From<bool> for Literal {
    fn from(v: bool) -> Self {
        Literal::Bool(v)
    }
}
impl From<&str> for Literal {
    fn from(v: &str) -> Self {
        Literal::Text(v.to_string())
    }
}
impl From<String> for Literal {
    fn from(v: String) -> Self {
        Literal::Text(v)
    }
}

/// Effect direction carried by directional claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Improves,
    Degrades,
    #[default]
    Neutral,
}

impl Direction {
    /// +1 for degrades, -1 for improves, 0 for neutral.
    pub fn sign(self) -> i32 {
        match self {
            Direction::Degrades => 1,
            Direction::Improves => -1,
            Direction::Neutral => 0,
        }
    }

    pub fn from_sign(sign: i32) -> Self {
        match sign.signum() {
            1 => Direction::Degrades,
            -1 => Direction::Improves,
            _ => Direction::Neutral,
        }
    }

    pub fn opposite(self) -> Self {
        Direction::from_sign(-self.sign())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Improves => "improves",
            Direction::Degrades => "degrades",
            Direction::Neutral => "neutral",
        }
    }
}

impl FromStr for Direction {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "improves" => Ok(Direction::Improves),
            "degrades" => Ok(Direction::Degrades),
            "neutral" => Ok(Direction::Neutral),
            other => Err(GraphError::InvalidDirection(other.to_string())),
        }
    }
}

/// Where an annotated assertion came from. Part of the edge annotation key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: String,
    pub evidence: String,
    pub collection_id: String,
    pub version: u32,
}

/// Per-provenance metadata of an annotated edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationData {
    pub claim_id: String,
    /// Extractor confidence in [0,1].
    pub confidence: f64,
    /// Retrieval weight in (0,1].
    pub weight: f64,
    pub direction: Direction,
    pub context: Option<NodeId>,
}

impl AnnotationData {
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.confidence.total_cmp(&other.confidence))
            .then_with(|| self.claim_id.cmp(&other.claim_id))
            .then(self.direction.cmp(&other.direction))
            .then_with(|| self.context.cmp(&other.context))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: NodeId,
    pub relation: NodeId,
    pub object: NodeId,
}

impl Triple {
    pub fn new(subject: NodeId, relation: NodeId, object: NodeId) -> Self {
        Self { subject, relation, object }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub class: Option<NodeId>,
    pub properties: BTreeMap<NodeId, BTreeSet<Literal>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("class conflict for {entity}: {existing} vs {incoming}")]
    ClassConflict { entity: NodeId, existing: NodeId, incoming: NodeId },
    #[error("class conflict across merged graphs for: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", "))]
    MergeConflict(Vec<NodeId>),
    #[error("invalid node id `{0}`")]
    InvalidNodeId(String),
    #[error("invalid direction `{0}`")]
    InvalidDirection(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Typed nodes, labeled edges and per-edge provenance annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<Triple, BTreeMap<Provenance, AnnotationData>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &Node)> {
        self.nodes.iter()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn class_of(&self, id: &NodeId) -> Option<&NodeId> {
        self.nodes.get(id).and_then(|n| n.class.as_ref())
    }

    pub fn edges(&self) -> impl Iterator<Item = &Triple> {
        self.edges.keys()
    }

    pub fn annotated_edges(
        &self,
    ) -> impl Iterator<Item = (&Triple, &BTreeMap<Provenance, AnnotationData>)> {
        self.edges.iter()
    }

    pub fn contains_edge(&self, t: &Triple) -> bool {
        self.edges.contains_key(t)
    }

    pub fn annotations(&self, t: &Triple) -> Option<&BTreeMap<Provenance, AnnotationData>> {
        self.edges.get(t)
    }

    pub fn annotation_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    /// Edges leaving `subject`, in relation/object order.
    pub fn outgoing<'a>(&'a self, subject: &'a NodeId) -> impl Iterator<Item = &'a Triple> + 'a {
        self.edges.keys().filter(move |t| &t.subject == subject)
    }

    /// Objects of `subject --relation--> ?`.
    pub fn objects<'a>(
        &'a self,
        subject: &'a NodeId,
        relation: &'a NodeId,
    ) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.outgoing(subject).filter(move |t| &t.relation == relation).map(|t| &t.object)
    }

    /// Subjects of `? --relation--> object`.
    pub fn subjects<'a>(
        &'a self,
        relation: &'a NodeId,
        object: &'a NodeId,
    ) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.edges
            .keys()
            .filter(move |t| &t.relation == relation && &t.object == object)
            .map(|t| &t.subject)
    }

    /// Nodes whose class is exactly `class`.
    pub fn nodes_of_class<'a>(&'a self, class: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.nodes.iter().filter(move |(_, n)| n.class.as_ref() == Some(class)).map(|(id, _)| id)
    }

    /// Ensures the node exists, assigning `class` when given.
    pub fn add_node(&mut self, id: NodeId, class: Option<NodeId>) -> Result<(), GraphError> {
        let node = self.nodes.entry(id.clone()).or_default();
        match (&node.class, class) {
            (Some(existing), Some(incoming)) if *existing != incoming => {
                Err(GraphError::ClassConflict { entity: id, existing: existing.clone(), incoming })
            }
            (None, Some(incoming)) => {
                node.class = Some(incoming);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn add_typed(&mut self, id: NodeId, class: &str) -> Result<(), GraphError> {
        self.add_node(id, Some(NodeId::term(class)))
    }

    /// Adds an unannotated edge; endpoints are created untyped when absent.
    pub fn add_edge(&mut self, triple: Triple) {
        self.nodes.entry(triple.subject.clone()).or_default();
        self.nodes.entry(triple.object.clone()).or_default();
        self.edges.entry(triple).or_default();
    }

    /// Adds an edge with one provenance record. An existing record with the same
    /// provenance is replaced.
    pub fn annotate(&mut self, triple: Triple, provenance: Provenance, data: AnnotationData) {
        self.nodes.entry(triple.subject.clone()).or_default();
        self.nodes.entry(triple.object.clone()).or_default();
        self.edges.entry(triple).or_default().insert(provenance, data);
    }

    pub fn annotations_mut(
        &mut self,
    ) -> impl Iterator<Item = (&Triple, &mut BTreeMap<Provenance, AnnotationData>)> {
        self.edges.iter_mut()
    }

    /// Replaces all values of `property` on `id`.
    pub fn set_property(&mut self, id: &NodeId, property: NodeId, value: impl Into<Literal>) {
        let node = self.nodes.entry(id.clone()).or_default();
        let mut set = BTreeSet::new();
        set.insert(value.into());
        node.properties.insert(property, set);
    }

    /// Adds one more value of `property` on `id`.
    pub fn add_property(&mut self, id: &NodeId, property: NodeId, value: impl Into<Literal>) {
        let node = self.nodes.entry(id.clone()).or_default();
        node.properties.entry(property).or_default().insert(value.into());
    }

    /// First value of a vocabulary property (`ex:<name>`).
    pub fn property(&self, id: &NodeId, name: &str) -> Option<&Literal> {
        self.nodes
            .get(id)?
            .properties
            .get(&NodeId::term(name))
            .and_then(|vals| vals.iter().next())
    }

    pub fn number(&self, id: &NodeId, name: &str) -> Option<f64> {
        self.property(id, name).and_then(Literal::as_f64)
    }

    pub fn text(&self, id: &NodeId, name: &str) -> Option<&str> {
        self.property(id, name).and_then(Literal::as_str)
    }
}

/// Union of graphs. Identical edges keep one record per distinct provenance; a node
/// typed differently in two inputs is a conflict.
pub fn merge<'a, I>(graphs: I) -> Result<KnowledgeGraph, GraphError>
where
    I: IntoIterator<Item = &'a KnowledgeGraph>,
{
    let mut out = KnowledgeGraph::new();
    let mut conflicts = BTreeSet::new();
    for g in graphs {
        for (id, node) in &g.nodes {
            let target = out.nodes.entry(id.clone()).or_default();
            match (&target.class, &node.class) {
                (Some(a), Some(b)) if a != b => {
                    conflicts.insert(id.clone());
                }
                (None, Some(b)) => target.class = Some(b.clone()),
                _ => {}
            }
            for (p, vals) in &node.properties {
                target.properties.entry(p.clone()).or_default().extend(vals.iter().cloned());
            }
        }
        for (t, anns) in &g.edges {
            let slot = out.edges.entry(t.clone()).or_default();
            for (prov, data) in anns {
                match slot.get(prov) {
                    // same provenance asserted twice: keep the least-trusted copy so the
                    // result does not depend on input order
                    Some(existing) if existing.total_cmp(data) != Ordering::Greater => {}
                    _ => {
                        slot.insert(prov.clone(), data.clone());
                    }
                }
            }
        }
    }
    if conflicts.is_empty() {
        Ok(out)
    } else {
        Err(GraphError::MergeConflict(conflicts.into_iter().collect()))
    }
}

/// Short stable hex digest used for frame, episode and claim identifiers.
pub fn stable_id(parts: &[&str]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov(doc: &str, coll: &str) -> Provenance {
        Provenance {
            document_id: doc.into(),
            evidence: "e".into(),
            collection_id: coll.into(),
            version: 1,
        }
    }

    fn data(conf: f64) -> AnnotationData {
        AnnotationData {
            claim_id: "c".into(),
            confidence: conf,
            weight: 1.0,
            direction: Direction::Neutral,
            context: None,
        }
    }

    fn sample() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        g.add_typed(NodeId::term("Temperature"), "EnvironmentalFactor").unwrap();
        g.add_edge(Triple::new(
            NodeId::term("Temperature"),
            NodeId::term("hasImpact"),
            NodeId::term("ImpactTempWrite"),
        ));
        g
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let g = sample();
        assert_eq!(merge([&g, &KnowledgeGraph::new()]).unwrap(), g);
    }

    #[test]
    fn merge_is_idempotent() {
        let g = sample();
        assert_eq!(merge([&g, &g]).unwrap(), g);
    }

    #[test]
    fn same_claim_from_two_collections_keeps_both_provenance_records() {
        let t = Triple::new(NodeId::term("Temperature"), NodeId::term("degrades"), NodeId::term("P99Latency"));
        let mut a = KnowledgeGraph::new();
        a.annotate(t.clone(), prov("d1", "c1"), data(0.9));
        let mut b = KnowledgeGraph::new();
        b.annotate(t.clone(), prov("d2", "c2"), data(0.8));
        let m = merge([&a, &b]).unwrap();
        assert_eq!(m.edge_count(), 1);
        assert_eq!(m.annotations(&t).unwrap().len(), 2);
    }

    #[test]
    fn merge_reports_class_conflicts() {
        let mut a = KnowledgeGraph::new();
        a.add_typed(NodeId::term("X"), "Metric").unwrap();
        let mut b = KnowledgeGraph::new();
        b.add_typed(NodeId::term("X"), "EnvironmentalFactor").unwrap();
        match merge([&a, &b]) {
            Err(GraphError::MergeConflict(ids)) => assert_eq!(ids, vec![NodeId::term("X")]),
            other => panic!("expected conflict, got {other:?}"),
        }
    }

    #[test]
    fn node_id_string_form_round_trips() {
        for id in [NodeId::term("Temperature"), NodeId::data("drive", "Disk/26871"), NodeId::iri(RDF_TYPE)] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert_eq!(NodeId::data("drive", "Disk/26871"), NodeId::Data("drive/Disk%2F26871".into()));
        assert_eq!(percent_decode("Disk%2F26871"), "Disk/26871");
    }

    #[test]
    fn literal_numbers_compare_totally() {
        let mut s = BTreeSet::new();
        s.insert(Literal::Number(f64::NAN));
        s.insert(Literal::Number(f64::NAN));
        s.insert(Literal::Number(0.5));
        assert_eq!(s.len(), 2);
    }
}
