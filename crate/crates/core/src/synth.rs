//! Seeded generators for property tests and the synthetic fleet.

pub mod fleet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{AnnotationData, Direction, KnowledgeGraph, Literal, NodeId, Provenance, Triple};

const TERMS: &[&str] = &[
    "Temperature", "Humidity", "Vibration", "WriteHeavy", "P99Latency", "ReadIO", "WriteIO",
    "ImpactTempWrite", "ImpactTempRead", "Cooling", "GarbageCollection", "UncorrectableErrors",
];
const CLASSES: &[&str] = &["EnvironmentalFactor", "Metric", "Impact", "OperationType", "MitigationStrategy"];
const RELATIONS: &[&str] = &["hasImpact", "onOperation", "greaterImpactThan", "impactsMetric", "degrades", "mitigatedBy"];
const TEXT_PIECES: &[&str] = &[
    "heat", "raises", "p99", "latency", "\"quoted\"", "back\\slash", "tab\t", "line\nbreak", "ünïcødé",
    "#hash", "<angle>", "a;b,c.", "", "\u{1}ctl",
];

fn text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..5);
    (0..n).map(|_| *TEXT_PIECES.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn node(rng: &mut ChaCha8Rng) -> NodeId {
    if rng.random_bool(0.7) {
        NodeId::term(*TERMS.choose(rng).expect("non-empty"))
    } else {
        let kind = ["frame", "window", "drive"].choose(rng).expect("non-empty");
        NodeId::data(kind, &format!("Disk/{} {}", rng.random_range(0..40), text(rng)))
    }
}

fn literal(rng: &mut ChaCha8Rng) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Bool(rng.random()),
        1 => Literal::Integer(rng.random_range(-1_000_000..1_000_000)),
        2 => {
            // Mix of ordinary magnitudes and awkward ones (subnormal, huge, negative zero).
            let x = match rng.random_range(0..4) {
                0 => rng.random::<f64>(),
                1 => rng.random_range(-1e6..1e6),
                2 => f64::from_bits(rng.random_range(1..0x000f_ffff_ffff_ffff)),
                _ => [-0.0, 1e300, f64::INFINITY, 0.1 + 0.2].choose(rng).copied().expect("non-empty"),
            };
            Literal::Number(x)
        }
        _ => Literal::Text(text(rng)),
    }
}

/// A random annotated graph with at most `max_triples` triples in its triples view.
pub fn random_graph(seed: u64, max_triples: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = KnowledgeGraph::new();
    let budget = rng.random_range(0..=max_triples);
    let mut used = 0;
    while used < budget {
        match rng.random_range(0..4) {
            0 => {
                let n = node(&mut rng);
                if g.class_of(&n).is_none() {
                    let class = *CLASSES.choose(&mut rng).expect("non-empty");
                    if g.add_typed(n, class).is_ok() {
                        used += 1;
                    }
                }
            }
            1 => {
                let n = node(&mut rng);
                let prop = ["median", "coverage", "note", "flag"].choose(&mut rng).expect("non-empty");
                g.add_property(&n, NodeId::term(*prop), literal(&mut rng));
                used += 1;
            }
            _ => {
                let t = Triple::new(
                    node(&mut rng),
                    NodeId::term(*RELATIONS.choose(&mut rng).expect("non-empty")),
                    node(&mut rng),
                );
                if rng.random_bool(0.6) {
                    let ctx = rng.random_bool(0.3).then(|| node(&mut rng));
                    g.annotate(
                        t,
                        Provenance {
                            document_id: format!("doc-{}", rng.random_range(0..5)),
                            evidence: text(&mut rng),
                            collection_id: format!("c{}", rng.random_range(0..3)),
                            version: rng.random_range(1..4),
                        },
                        AnnotationData {
                            claim_id: format!("doc#t{}", rng.random_range(0..50)),
                            confidence: rng.random(),
                            weight: 1.0 - rng.random::<f64>(),
                            direction: *[Direction::Improves, Direction::Degrades, Direction::Neutral]
                                .choose(&mut rng)
                                .expect("non-empty"),
                            context: ctx,
                        },
                    );
                } else {
                    g.add_edge(t);
                }
                used += 1;
            }
        }
    }
    g
}
