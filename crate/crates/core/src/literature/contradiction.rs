//! Opposing-direction claims on a shared (subject, object, context) key.
//!
//! Both sides stay in the graph. The side with the lower summed confidence has its
//! retrieval weight multiplied by the down-weight factor; on a tie both sides are.
//! Items are sorted by id before any arithmetic, so the outcome does not depend on
//! input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Claim;
use crate::graph::{Direction, KnowledgeGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContradictionKey {
    pub subject: NodeId,
    pub object: NodeId,
    /// Missing context only matches other missing contexts.
    pub context: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRecord {
    /// (improving claim, degrading claim)
    pub claims: (String, String),
    pub key: ContradictionKey,
    pub multipliers: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContradictionOutcome {
    pub records: Vec<ContradictionRecord>,
    /// Retrieval weight per claim id; 1.0 unless down-weighted.
    pub weights: BTreeMap<String, f64>,
}

struct Item {
    id: String,
    key: ContradictionKey,
    direction: Direction,
    confidence: f64,
}

fn resolve(mut items: Vec<Item>, factor: f64) -> ContradictionOutcome {
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = ContradictionOutcome {
        records: Vec::new(),
        weights: items.iter().map(|i| (i.id.clone(), 1.0)).collect(),
    };
    let mut groups: BTreeMap<&ContradictionKey, Vec<&Item>> = BTreeMap::new();
    for it in &items {
        groups.entry(&it.key).or_default().push(it);
    }
    for (key, members) in groups {
        let improves: Vec<&Item> = members.iter().copied().filter(|i| i.direction == Direction::Improves).collect();
        let degrades: Vec<&Item> = members.iter().copied().filter(|i| i.direction == Direction::Degrades).collect();
        if improves.is_empty() || degrades.is_empty() {
            continue;
        }
        let sum = |side: &[&Item]| side.iter().map(|i| i.confidence).sum::<f64>();
        let (si, sd) = (sum(&improves), sum(&degrades));
        let (mi, md) = match si.partial_cmp(&sd) {
            Some(std::cmp::Ordering::Less) => (factor, 1.0),
            Some(std::cmp::Ordering::Greater) => (1.0, factor),
            _ => (factor, factor),
        };
        for (side, m) in [(&improves, mi), (&degrades, md)] {
            for it in side.iter() {
                out.weights.insert(it.id.clone(), m);
            }
        }
        for a in &improves {
            for b in &degrades {
                out.records.push(ContradictionRecord {
                    claims: (a.id.clone(), b.id.clone()),
                    key: key.clone(),
                    multipliers: (mi, md),
                });
            }
        }
    }
    out
}

/// Contradictions among accepted, normalized claims.
pub fn register_contradictions(claims: &[Claim], factor: f64) -> ContradictionOutcome {
    let items = claims
        .iter()
        .filter_map(|c| {
            Some(Item {
                id: c.id.clone(),
                key: ContradictionKey {
                    subject: c.subject.as_ref()?.node(),
                    object: c.object.as_ref()?.node(),
                    context: c.context.as_ref().map(|t| t.node()),
                },
                direction: c.direction,
                confidence: c.confidence.unwrap_or(0.0),
            })
        })
        .collect();
    resolve(items, factor)
}

/// Recomputes every annotation weight of a merged graph from scratch.
pub fn reweight_graph(graph: &mut KnowledgeGraph, factor: f64) -> Vec<ContradictionRecord> {
    let ann_id = |claim: &str, coll: &str, version: u32| format!("{claim}@{coll}/v{version}");
    let items: Vec<Item> = graph
        .annotated_edges()
        .flat_map(|(t, anns)| {
            anns.iter().map(move |(p, d)| Item {
                id: ann_id(&d.claim_id, &p.collection_id, p.version),
                key: ContradictionKey {
                    subject: t.subject.clone(),
                    object: t.object.clone(),
                    context: d.context.clone(),
                },
                direction: d.direction,
                confidence: d.confidence,
            })
        })
        .collect();
    let outcome = resolve(items, factor);
    for (_, anns) in graph.annotations_mut() {
        for (p, d) in anns.iter_mut() {
            d.weight = outcome.weights[&ann_id(&d.claim_id, &p.collection_id, p.version)];
        }
    }
    outcome.records
}
