//! Literature evidence retrieval: a two-branch graph pattern over the shared vocabulary
//! and score-ordered evidence items built from edge annotations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{QueryIntent, QueryKind, ReasoningError};
use crate::datakg::DataSubgraph;
use crate::graph::query::{evaluate_pattern, BindingSet, GraphPattern, PatternTerm, Term, TriplePattern};
use crate::graph::{Direction, KnowledgeGraph, NodeId, Taxonomy, Triple};

const DESCRIPTIVE: &[&str] = &["impactsMetric", "impactsOperation", "hasImpact", "causes"];
const PREDICTIVE: &[&str] = &["impactsMetric", "impactsOperation", "hasImpact", "causes", "degrades"];
const PRESCRIPTIVE: &[&str] =
    &["impactsMetric", "impactsOperation", "hasImpact", "causes", "mitigatedBy", "improves", "degrades"];
const WHAT_IF: &[&str] = &["impactsMetric", "impactsOperation", "improves", "degrades"];

pub fn relations_for(kind: QueryKind) -> &'static [&'static str] {
    match kind {
        QueryKind::Descriptive => DESCRIPTIVE,
        QueryKind::Predictive => PREDICTIVE,
        QueryKind::Prescriptive => PRESCRIPTIVE,
        QueryKind::WhatIf => WHAT_IF,
    }
}

/// The retrieval query: one branch anchored on the subject, one on the object. The
/// effect direction is read from each edge's annotations, not bound by the pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceQuery {
    pub kind: QueryKind,
    pub terms: Vec<String>,
    pub relations: Vec<String>,
    pub branches: Vec<GraphPattern>,
}

impl EvidenceQuery {
    pub fn to_sparql(&self) -> String {
        self.branches.iter().map(|b| b.to_sparql()).collect::<Vec<_>>().join("\n# UNION\n")
    }

    pub fn evaluate(&self, literature: &KnowledgeGraph) -> Vec<BindingSet> {
        self.branches.iter().map(|b| evaluate_pattern(literature, b)).collect()
    }
}

fn term_node(name: &str) -> Term {
    Term::Node(NodeId::term(name))
}

/// Pre: `terms` are canonical concept names. Perturbed factors of a what-if intent are
/// added to the anchor set.
pub fn build_evidence_query(intent: &QueryIntent, terms: &[String]) -> Result<EvidenceQuery, ReasoningError> {
    let mut anchor: BTreeSet<String> = terms.iter().filter(|t| !t.trim().is_empty()).cloned().collect();
    anchor.extend(intent.perturbations.iter().map(|p| p.factor.clone()));
    if anchor.is_empty() {
        return Err(ReasoningError::NoTerms);
    }
    let relations = relations_for(intent.kind);
    let pattern = || {
        TriplePattern::new(PatternTerm::var("factor"), PatternTerm::var("relation"), PatternTerm::var("target"))
    };
    let select = vec!["factor".to_string(), "relation".to_string(), "target".to_string()];
    let mut branches = Vec::new();
    for var in ["factor", "target"] {
        let p = GraphPattern::new(vec![pattern()], select.clone())?
            .with_values("relation", relations.iter().map(|r| term_node(r)))?
            .with_values(var, anchor.iter().map(|t| term_node(t)))?;
        branches.push(p);
    }
    Ok(EvidenceQuery {
        kind: intent.kind,
        terms: anchor.into_iter().collect(),
        relations: relations.iter().map(|r| r.to_string()).collect(),
        branches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub claim_id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub direction: Direction,
    pub context: Option<String>,
    pub evidence: String,
    pub document_id: String,
    pub collection: String,
    pub version: u32,
    pub confidence: f64,
    pub weight: f64,
    /// confidence × weight
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

impl EvidenceItem {
    /// `claim@collection/vN`, unique per annotation.
    pub fn id(&self) -> String {
        format!("{}@{}/v{}", self.claim_id, self.collection, self.version)
    }
}

fn name(n: &NodeId) -> String {
    n.term_name().map(str::to_string).unwrap_or_else(|| n.to_string())
}

/// One item per annotation of every bound edge, deduplicated across branches. Order is
/// score descending, then claim id, collection and version, so it does not depend on
/// the order of `bindings` or their rows.
pub fn rank_evidence(bindings: &[BindingSet], literature: &KnowledgeGraph) -> Vec<EvidenceItem> {
    let mut items: BTreeMap<(String, String, u32, String), EvidenceItem> = BTreeMap::new();
    for b in bindings {
        for row in &b.rows {
            let node = |var: &str| b.get(row, var).and_then(Term::as_node);
            let (Some(s), Some(r), Some(o)) = (node("factor"), node("relation"), node("target")) else { continue };
            let t = Triple::new(s.clone(), r.clone(), o.clone());
            let Some(anns) = literature.annotations(&t) else { continue };
            for (p, d) in anns {
                let key = (d.claim_id.clone(), p.collection_id.clone(), p.version, p.document_id.clone());
                items.entry(key).or_insert_with(|| EvidenceItem {
                    claim_id: d.claim_id.clone(),
                    subject: name(s),
                    relation: name(r),
                    object: name(o),
                    direction: d.direction,
                    context: d.context.as_ref().map(name),
                    evidence: p.evidence.clone(),
                    document_id: p.document_id.clone(),
                    collection: p.collection_id.clone(),
                    version: p.version,
                    confidence: d.confidence,
                    weight: d.weight,
                    score: d.confidence * d.weight,
                    rank: 0,
                });
            }
        }
    }
    let mut out: Vec<EvidenceItem> = items.into_values().collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.claim_id.cmp(&b.claim_id))
            .then_with(|| a.collection.cmp(&b.collection))
            .then(a.version.cmp(&b.version))
            .then_with(|| a.document_id.cmp(&b.document_id))
    });
    for (i, it) in out.iter_mut().enumerate() {
        it.rank = i + 1;
    }
    out
}

pub fn retrieve(
    intent: &QueryIntent,
    terms: &[String],
    literature: &KnowledgeGraph,
) -> Result<(EvidenceQuery, Vec<EvidenceItem>), ReasoningError> {
    let q = build_evidence_query(intent, terms)?;
    let items = rank_evidence(&q.evaluate(literature), literature);
    Ok((q, items))
}

/// Canonical concepts a window's data graph refers to: measured concepts, environment
/// factor concepts and the workload category when the taxonomy knows it.
pub fn vocabulary_terms(sg: &DataSubgraph, taxonomy: &Taxonomy) -> Vec<String> {
    let g = &sg.graph;
    let mut out = BTreeSet::new();
    let measures = NodeId::term("measures");
    for t in g.edges().filter(|t| t.relation == measures) {
        if let Some(n) = t.object.term_name() {
            out.insert(n.to_string());
        }
    }
    for (id, node) in g.nodes() {
        match node.class.as_ref().and_then(|c| c.term_name()) {
            Some("EnvFrame") => {
                for (p, v) in &node.properties {
                    if p.term_name().is_some_and(|n| n.ends_with("Concept")) {
                        out.extend(v.iter().filter_map(|l| l.as_str()).map(str::to_string));
                    }
                }
            }
            Some("WorkloadFrame") => {
                if let Some(c) = g.text(id, "category") {
                    out.insert(c.to_string());
                }
            }
            _ => {}
        }
    }
    out.into_iter()
        .filter_map(|t| taxonomy.normalize(&t).map(|c| c.name.clone()).or_else(|| taxonomy.contains(&t).then_some(t)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
