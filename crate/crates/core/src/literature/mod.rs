//! Literature claims: batch ingestion, normalization, validation, contradiction
//! handling, versioned materialization and the concept-proposal queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::graph::taxonomy::ROOT;
use crate::graph::{Direction, NodeId, OntologySchema, Provenance, Taxonomy};

pub mod contradiction;
pub mod proposals;
pub mod store;
pub mod validate;

pub use contradiction::{register_contradictions, reweight_graph, ContradictionOutcome, ContradictionRecord};
pub use proposals::{ConceptProposal, ProposalQueue, ProposalStatus};
pub use store::{claims_to_graph, LiteratureStore, MaterializeOutcome, VersionEntry};
pub use validate::{validate_claims, RejectReason, Rejection, ValidationReport};

/// Retrieval-weight multiplier for the weaker side of a contradiction.
pub const DOWN_WEIGHT: f64 = 0.5;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LiteratureError {
    #[error("extraction batch is missing required fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("extraction batch is not valid JSON: {0}")]
    Json(String),
    #[error("version regression for collection {collection}: {requested} <= latest {latest}")]
    VersionRegression { collection: String, requested: u32, latest: u32 },
    #[error("storage error at {path}: {source}")]
    Storage { path: String, source: std::io::Error },
    #[error("graph error: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("serialization error: {0}")]
    Serialize(#[from] crate::graph::turtle::SerializeError),
    #[error("turtle error: {0}")]
    Turtle(#[from] crate::graph::turtle::TurtleError),
    #[error("proposal error: {0}")]
    Proposal(String),
    #[error("collection id `{0}` must be non-empty and use only letters, digits, '-', '_' or '.'")]
    InvalidCollection(String),
}

pub(crate) fn storage(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> LiteratureError + '_ {
    move |source| LiteratureError::Storage { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub id: String,
    pub mention: String,
    #[serde(default)]
    pub class: Option<String>,
    #[serde(default)]
    pub taxonomy_path: Option<String>,
}

/// Triple fields are optional at parse time; gaps become notes the validator rejects on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchTriple {
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub relation: Option<String>,
    #[serde(default)]
    pub object: Option<String>,
    #[serde(default)]
    pub evidence: Option<String>,
    #[serde(default)]
    pub confidence: Option<Value>,
    #[serde(default)]
    pub directional: Option<bool>,
    #[serde(default)]
    pub direction: Option<String>,
    #[serde(default)]
    pub context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalDraft {
    pub name: String,
    pub definition: String,
    pub parent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionBatch {
    pub document_id: String,
    pub document_text: String,
    pub entities: Vec<EntityDecl>,
    pub triples: Vec<BatchTriple>,
    #[serde(default)]
    pub mappings: BTreeMap<String, String>,
    #[serde(default)]
    pub axioms: Vec<Value>,
    #[serde(default)]
    pub concept_proposals: Vec<ProposalDraft>,
}

const REQUIRED: [&str; 4] = ["document_id", "document_text", "entities", "triples"];

impl ExtractionBatch {
    pub fn from_json(text: &str) -> Result<Self, LiteratureError> {
        let v: Value = serde_json::from_str(text).map_err(|e| LiteratureError::Json(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self, LiteratureError> {
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| v.get(**k).is_none_or(Value::is_null))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(LiteratureError::MissingFields(missing));
        }
        serde_json::from_value(v).map_err(|e| LiteratureError::Json(e.to_string()))
    }
}

/// One end of a claim triple, or its context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimTerm {
    pub mention: String,
    /// Graph term; the canonical concept name once normalized.
    pub name: String,
    pub class: Option<String>,
    pub taxonomy_path: Option<String>,
    pub canonical: bool,
    pub out_of_vocabulary: bool,
}

impl ClaimTerm {
    fn from_mention(mention: &str, class: Option<String>, taxonomy_path: Option<String>) -> Self {
        Self {
            mention: mention.to_string(),
            name: camel_case(mention),
            class,
            taxonomy_path,
            canonical: false,
            out_of_vocabulary: false,
        }
    }

    pub fn node(&self) -> NodeId {
        NodeId::term(&self.name)
    }
}

/// `read disturb margin` → `ReadDisturbMargin`; already-camel names pass through.
pub fn camel_case(s: &str) -> String {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            let first = cs.next().expect("non-empty word").to_ascii_uppercase();
            std::iter::once(first).chain(cs).collect::<String>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimStatus {
    Pending,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    /// `<document id>#t<index in batch>`
    pub id: String,
    pub subject: Option<ClaimTerm>,
    pub relation: Option<String>,
    pub object: Option<ClaimTerm>,
    pub context: Option<ClaimTerm>,
    pub provenance: Provenance,
    pub confidence: Option<f64>,
    pub directional: bool,
    pub direction: Direction,
    pub status: ClaimStatus,
    /// Problems found at ingest time; any note fails schema completeness.
    pub notes: Vec<String>,
}

impl Claim {
    pub fn key_terms(&self) -> impl Iterator<Item = &ClaimTerm> {
        self.subject.iter().chain(self.object.iter()).chain(self.context.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingestion {
    pub claims: Vec<Claim>,
    pub warnings: Vec<String>,
}

/// One pending claim per batch triple, with provenance attached.
pub fn ingest_extraction(batch: &ExtractionBatch, collection_id: &str) -> Ingestion {
    let mut warnings = Vec::new();
    if batch.triples.is_empty() {
        warnings.push(format!("batch {} contains no triples", batch.document_id));
    }
    let by_id: BTreeMap<&str, &EntityDecl> = batch.entities.iter().map(|e| (e.id.as_str(), e)).collect();
    let by_mention: BTreeMap<&str, &EntityDecl> = batch.entities.iter().map(|e| (e.mention.as_str(), e)).collect();

    let resolve = |raw: &str, role: &str, notes: &mut Vec<String>| -> ClaimTerm {
        match by_id.get(raw).or_else(|| by_mention.get(raw)) {
            Some(e) => {
                let path = e.taxonomy_path.clone().or_else(|| batch.mappings.get(&e.mention).cloned());
                ClaimTerm::from_mention(&e.mention, e.class.clone(), path)
            }
            None => {
                notes.push(format!("dangling-entity: {role} `{raw}` is not declared in the batch"));
                ClaimTerm::from_mention(raw, None, batch.mappings.get(raw).cloned())
            }
        }
    };

    let claims = batch
        .triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut notes = Vec::new();
            let field = |v: &Option<String>, name: &str, notes: &mut Vec<String>| -> Option<String> {
                match v.as_deref().map(str::trim) {
                    Some(s) if !s.is_empty() => Some(s.to_string()),
                    _ => {
                        notes.push(format!("missing-field: {name}"));
                        None
                    }
                }
            };
            let subject = field(&t.subject, "subject", &mut notes).map(|s| resolve(&s, "subject", &mut notes));
            let relation = field(&t.relation, "relation", &mut notes);
            let object = field(&t.object, "object", &mut notes).map(|s| resolve(&s, "object", &mut notes));
            let context = t.context.as_deref().filter(|s| !s.trim().is_empty()).map(|s| resolve(s, "context", &mut notes));
            let confidence = match &t.confidence {
                None | Some(Value::Null) => {
                    notes.push("missing-field: confidence".to_string());
                    None
                }
                Some(v) => match v.as_f64() {
                    Some(c) if (0.0..=1.0).contains(&c) => Some(c),
                    Some(c) => {
                        notes.push(format!("confidence {c} outside [0,1]"));
                        Some(c)
                    }
                    None => {
                        notes.push(format!("confidence `{v}` is not numeric"));
                        None
                    }
                },
            };
            let direction = match t.direction.as_deref() {
                None => Direction::Neutral,
                Some(d) => d.parse().unwrap_or_else(|_| {
                    notes.push(format!("invalid direction `{d}`"));
                    Direction::Neutral
                }),
            };
            Claim {
                id: format!("{}#t{i}", batch.document_id),
                subject,
                relation,
                object,
                context,
                provenance: Provenance {
                    document_id: batch.document_id.clone(),
                    evidence: t.evidence.clone().unwrap_or_default(),
                    collection_id: collection_id.to_string(),
                    version: 0,
                },
                confidence,
                directional: t.directional.unwrap_or(false),
                direction,
                status: ClaimStatus::Pending,
                notes,
            }
        })
        .collect();
    Ingestion { claims, warnings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub claim: Claim,
    /// Drafts for out-of-vocabulary mentions; queued only on request.
    pub drafts: Vec<ConceptProposal>,
}

/// Maps every mention to its canonical concept. Mentions with a declared class and no
/// vocabulary match are individuals (e.g. impact nodes) and keep their own name;
/// unclassified unknown mentions are flagged out-of-vocabulary.
pub fn normalize_claim(claim: &Claim, taxonomy: &Taxonomy, schema: &OntologySchema) -> Normalized {
    let mut out = claim.clone();
    let mut drafts = Vec::new();
    let doc = claim.provenance.document_id.clone();
    let mut fix = |term: &mut ClaimTerm| {
        let hit = term
            .taxonomy_path
            .as_deref()
            .and_then(|p| taxonomy.resolve_path(p))
            .filter(|c| c.status == crate::graph::ConceptStatus::Established)
            .or_else(|| taxonomy.normalize(&term.mention))
            .or_else(|| taxonomy.normalize(&term.name));
        match hit {
            Some(c) => {
                term.name = c.name.clone();
                term.class = taxonomy.class_of(&c.name).map(str::to_string);
                term.canonical = true;
                term.out_of_vocabulary = false;
            }
            None if term.class.as_deref().is_some_and(|c| schema.has_class(c)) => {}
            None => {
                if let Some(c) = schema.asserted_class(&term.name) {
                    term.class = Some(c.to_string());
                    return;
                }
                term.out_of_vocabulary = true;
                let parent = term
                    .taxonomy_path
                    .as_deref()
                    .and_then(|p| p.trim_matches('/').rsplit('/').nth(1).map(str::to_string))
                    .unwrap_or_else(|| ROOT.to_string());
                drafts.push(ConceptProposal::draft(
                    &term.name,
                    &format!("Out-of-vocabulary mention `{}` extracted from {doc}.", term.mention),
                    &parent,
                    &doc,
                ));
            }
        }
    };
    if let Some(t) = out.subject.as_mut() {
        fix(t);
    }
    if let Some(t) = out.object.as_mut() {
        fix(t);
    }
    if let Some(t) = out.context.as_mut() {
        fix(t);
    }
    if let Some(rel) = out.relation.as_ref().and_then(|r| schema.relation(r)) {
        if let Some(d) = rel.implied_direction {
            out.direction = d;
        }
    }
    Normalized { claim: out, drafts }
}

/// Ingest, normalize and validate one batch against the accepted-graph context `graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub warnings: Vec<String>,
    pub report: ValidationReport,
    pub drafts: Vec<ConceptProposal>,
}

pub fn process_batch(
    batch: &ExtractionBatch,
    collection_id: &str,
    taxonomy: &Taxonomy,
    schema: &OntologySchema,
    graph: &crate::graph::KnowledgeGraph,
    min_confidence: f64,
) -> BatchOutcome {
    let ingestion = ingest_extraction(batch, collection_id);
    let mut drafts: Vec<ConceptProposal> = batch
        .concept_proposals
        .iter()
        .map(|p| ConceptProposal::draft(&p.name, &p.definition, &p.parent, &batch.document_id))
        .collect();
    let claims: Vec<Claim> = ingestion
        .claims
        .iter()
        .map(|c| {
            let n = normalize_claim(c, taxonomy, schema);
            drafts.extend(n.drafts);
            n.claim
        })
        .collect();
    drafts.sort_by(|a, b| a.id.cmp(&b.id));
    drafts.dedup_by(|a, b| a.id == b.id);
    let report = validate_claims(&claims, schema, graph, &batch.document_text, min_confidence);
    BatchOutcome { warnings: ingestion.warnings, report, drafts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(triples: Vec<BatchTriple>) -> ExtractionBatch {
        ExtractionBatch {
            document_id: "doc1".into(),
            document_text: "Heat raises tail latency.".into(),
            entities: vec![
                EntityDecl { id: "e1".into(), mention: "inlet temperature".into(), class: None, taxonomy_path: None },
                EntityDecl { id: "e2".into(), mention: "tail latency".into(), class: Some("Metric".into()), taxonomy_path: None },
                EntityDecl { id: "e3".into(), mention: "read disturb margin".into(), class: None, taxonomy_path: Some("SSD/HardwareStack/FlashTechnology/ReadDisturbMargin".into()) },
            ],
            triples,
            mappings: BTreeMap::new(),
            axioms: vec![],
            concept_proposals: vec![],
        }
    }

    fn triple(s: &str, r: &str, o: &str) -> BatchTriple {
        BatchTriple {
            subject: Some(s.into()),
            relation: Some(r.into()),
            object: Some(o.into()),
            evidence: Some("Heat raises tail latency.".into()),
            confidence: Some(serde_json::json!(0.9)),
            directional: Some(true),
            direction: Some("degrades".into()),
            context: None,
        }
    }

    #[test]
    fn missing_batch_fields_are_enumerated() {
        let err = ExtractionBatch::from_json(r#"{"document_id":"d","entities":[]}"#).unwrap_err();
        match err {
            LiteratureError::MissingFields(f) => assert_eq!(f, ["document_text", "triples"]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn three_triples_three_pending_claims() {
        let ing = ingest_extraction(
            &batch(vec![triple("e1", "degrades", "e2"), triple("e1", "impactsMetric", "e2"), triple("e3", "causes", "e2")]),
            "c1",
        );
        assert_eq!(ing.claims.len(), 3);
        assert!(ing.claims.iter().all(|c| c.provenance.document_id == "doc1" && c.status == ClaimStatus::Pending));
        assert_eq!(ing.claims[2].id, "doc1#t2");
        assert!(ing.warnings.is_empty());
        let empty = ingest_extraction(&batch(vec![]), "c1");
        assert!(empty.claims.is_empty());
        assert_eq!(empty.warnings.len(), 1);
    }

    #[test]
    fn dangling_entity_is_noted() {
        let ing = ingest_extraction(&batch(vec![triple("e9", "degrades", "e2")]), "c1");
        assert!(ing.claims[0].notes.iter().any(|n| n.starts_with("dangling-entity")));
    }

    #[test]
    fn normalization_canonicalizes_and_flags_oov() {
        let (tax, schema) = (Taxonomy::builtin(), OntologySchema::builtin());
        let ing = ingest_extraction(&batch(vec![triple("e1", "degrades", "e2"), triple("e3", "causes", "e2")]), "c1");
        let n = normalize_claim(&ing.claims[0], &tax, &schema);
        assert_eq!(n.claim.subject.as_ref().unwrap().name, "Temperature");
        assert_eq!(n.claim.object.as_ref().unwrap().name, "P99Latency");
        assert!(n.drafts.is_empty());
        // Canonical input is a fixed point.
        assert_eq!(normalize_claim(&n.claim, &tax, &schema).claim, n.claim);

        let n = normalize_claim(&ing.claims[1], &tax, &schema);
        let s = n.claim.subject.as_ref().unwrap();
        assert!(s.out_of_vocabulary);
        assert_eq!(s.name, "ReadDisturbMargin");
        assert_eq!(n.drafts.len(), 1);
        assert_eq!(n.drafts[0].parent, "FlashTechnology");
    }

    #[test]
    fn camel_case_examples() {
        assert_eq!(camel_case("read disturb margin"), "ReadDisturbMargin");
        assert_eq!(camel_case("ImpactTempWrite"), "ImpactTempWrite");
        assert_eq!(camel_case("p99-latency"), "P99Latency");
    }
}
