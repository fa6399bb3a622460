//! Grounding metrics: claim faithfulness against the data graph and counterfactual
//! validity against retrieved evidence.

use serde::{Deserialize, Serialize};

use super::Rate;
use crate::datakg::{property_unit, DataSubgraph};
use crate::graph::{Direction, NodeId};
use crate::reasoning::{Counterfactual, EvidenceItem, SidecarClaim};

/// Relative tolerance for values copied verbatim from frames.
pub const TRANSCRIPTION_TOLERANCE: f64 = 1e-6;
/// Relative tolerance for paraphrased quantities from free-text backends.
pub const FREE_TEXT_TOLERANCE: f64 = 0.05;

fn close(claimed: f64, stored: f64, rel_tol: f64) -> bool {
    claimed == stored || (claimed - stored).abs() <= rel_tol * stored.abs().max(claimed.abs())
}

fn same_unit(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimVerdict {
    Supported,
    UnknownWindow,
    UnknownNode,
    NoSuchProperty,
    UnitMismatch,
    ValueMismatch,
}

/// A claim is supported iff its window names one of `subgraphs`, its node exists there,
/// its unit matches the property's unit and its quantity the stored value.
pub fn verify_claim(claim: &SidecarClaim, subgraphs: &[&DataSubgraph], rel_tol: f64) -> ClaimVerdict {
    let Some(sg) = subgraphs.iter().find(|s| s.tag.to_string() == claim.window) else {
        return ClaimVerdict::UnknownWindow;
    };
    let Ok(node) = claim.node.parse::<NodeId>() else { return ClaimVerdict::UnknownNode };
    if !sg.graph.contains_node(&node) {
        return ClaimVerdict::UnknownNode;
    }
    let Some(stored) = sg.graph.number(&node, &claim.property) else { return ClaimVerdict::NoSuchProperty };
    match property_unit(&sg.graph, &node, &claim.property) {
        Some(u) if same_unit(&u, &claim.unit) => {}
        _ => return ClaimVerdict::UnitMismatch,
    }
    if close(claim.quantity, stored, rel_tol) {
        ClaimVerdict::Supported
    } else {
        ClaimVerdict::ValueMismatch
    }
}

pub fn faithfulness_precision(claims: &[SidecarClaim], subgraphs: &[&DataSubgraph], rel_tol: f64) -> Rate {
    let ok = claims.iter().filter(|c| verify_claim(c, subgraphs, rel_tol) == ClaimVerdict::Supported).count();
    Rate::new(ok, claims.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterfactualVerdict {
    Valid,
    Contradicted,
    /// No evidence links the factor to the metric with a direction.
    Unmatched,
}

pub fn judge_counterfactual(s: &Counterfactual, evidence: &[EvidenceItem]) -> CounterfactualVerdict {
    let linked: Vec<&EvidenceItem> = evidence
        .iter()
        .filter(|e| e.subject == s.factor && e.object == s.metric && e.direction != Direction::Neutral)
        .collect();
    if linked.is_empty() {
        return CounterfactualVerdict::Unmatched;
    }
    let sign = if s.delta > 0.0 { 1 } else if s.delta < 0.0 { -1 } else { 0 };
    if linked.iter().any(|e| Direction::from_sign(sign * e.direction.sign()) == s.direction) {
        CounterfactualVerdict::Valid
    } else {
        CounterfactualVerdict::Contradicted
    }
}

/// Unmatched statements count as invalid unless `exclude_unmatched` drops them from the
/// denominator.
pub fn counterfactual_validity(statements: &[Counterfactual], evidence: &[EvidenceItem], exclude_unmatched: bool) -> Rate {
    let verdicts: Vec<CounterfactualVerdict> = statements.iter().map(|s| judge_counterfactual(s, evidence)).collect();
    let valid = verdicts.iter().filter(|v| **v == CounterfactualVerdict::Valid).count();
    let den = if exclude_unmatched {
        verdicts.iter().filter(|v| **v != CounterfactualVerdict::Unmatched).count()
    } else {
        verdicts.len()
    };
    Rate::new(valid, den)
}
