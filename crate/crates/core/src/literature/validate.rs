//! The four-gate claim filter.

use serde::{Deserialize, Serialize};

use super::{Claim, ClaimStatus};
use crate::graph::{check_triple, KnowledgeGraph, OntologySchema, TripleCandidate, TypeReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    SchemaIncomplete,
    MissingEvidence,
    UnknownRelation,
    DomainViolation,
    RangeViolation,
    UnresolvedClass,
    IntegrityViolation,
    EvidenceMisaligned,
    BelowConfidence,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::SchemaIncomplete => "schema-incomplete",
            RejectReason::MissingEvidence => "missing-evidence",
            RejectReason::UnknownRelation => "unknown-relation",
            RejectReason::DomainViolation => "domain-violation",
            RejectReason::RangeViolation => "range-violation",
            RejectReason::UnresolvedClass => "unresolved-class",
            RejectReason::IntegrityViolation => "integrity-violation",
            RejectReason::EvidenceMisaligned => "evidence-misaligned",
            RejectReason::BelowConfidence => "below-confidence",
        }
    }
}

impl From<TypeReason> for RejectReason {
    fn from(r: TypeReason) -> Self {
        match r {
            TypeReason::UnknownRelation => RejectReason::UnknownRelation,
            TypeReason::DomainViolation => RejectReason::DomainViolation,
            TypeReason::RangeViolation => RejectReason::RangeViolation,
            TypeReason::UnresolvedClass => RejectReason::UnresolvedClass,
            TypeReason::IntegrityViolation => RejectReason::IntegrityViolation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// The claim exactly as submitted.
    pub claim: Claim,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted: Vec<Claim>,
    pub rejected: Vec<Rejection>,
}

/// Lowercase with whitespace runs collapsed to one space.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

pub fn evidence_aligned(evidence: &str, document: &str) -> bool {
    let e = normalize_text(evidence);
    !e.is_empty() && normalize_text(document).contains(&e)
}

/// Gates in order: schema completeness, ontology type check, evidence alignment,
/// confidence threshold. The first failing gate names the rejection.
pub fn validate_claims(
    claims: &[Claim],
    schema: &OntologySchema,
    graph: &KnowledgeGraph,
    document_text: &str,
    min_confidence: f64,
) -> ValidationReport {
    let doc = normalize_text(document_text);
    let mut report = ValidationReport::default();
    for claim in claims {
        match gate(claim, schema, graph, &doc, min_confidence) {
            Ok(()) => {
                let mut c = claim.clone();
                c.status = ClaimStatus::Accepted;
                report.accepted.push(c);
            }
            Err((reason, detail)) => report.rejected.push(Rejection { claim: claim.clone(), reason, detail }),
        }
    }
    report
}

fn gate(
    claim: &Claim,
    schema: &OntologySchema,
    graph: &KnowledgeGraph,
    normalized_doc: &str,
    min_confidence: f64,
) -> Result<(), (RejectReason, String)> {
    if claim.provenance.evidence.trim().is_empty() {
        return Err((RejectReason::MissingEvidence, "claim carries no evidence sentence".into()));
    }
    if let Some(note) = claim.notes.first() {
        return Err((RejectReason::SchemaIncomplete, note.clone()));
    }
    let (Some(s), Some(r), Some(o), Some(conf)) = (&claim.subject, &claim.relation, &claim.object, claim.confidence)
    else {
        return Err((RejectReason::SchemaIncomplete, "subject, relation, object and confidence are required".into()));
    };
    if let Some(decl) = schema.relation(r) {
        if decl.directional && !claim.directional {
            return Err((RejectReason::SchemaIncomplete, format!("relation {r} is directional but the claim is not flagged directional")));
        }
    }

    let cand = TripleCandidate::new(s.node(), r.clone(), o.node()).with_classes(s.class.as_deref(), o.class.as_deref());
    let verdict = check_triple(&cand, schema, graph);
    if let crate::graph::TypeCheckResult::Reject { reason, detail } = verdict {
        return Err((reason.into(), detail));
    }
    if let Some(ctx) = &claim.context {
        if ctx.class.as_deref().is_none_or(|c| !schema.has_class(c)) {
            return Err((RejectReason::UnresolvedClass, format!("context `{}` has no known class", ctx.mention)));
        }
    }

    let e = normalize_text(&claim.provenance.evidence);
    if !normalized_doc.contains(&e) {
        return Err((RejectReason::EvidenceMisaligned, "evidence sentence does not occur in the document".into()));
    }
    if conf < min_confidence {
        return Err((RejectReason::BelowConfidence, format!("confidence {conf} below {min_confidence}")));
    }
    Ok(())
}
