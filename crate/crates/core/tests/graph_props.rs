use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use ssdkg_core::graph::ontology::{Axiom, RelationDecl};
use ssdkg_core::graph::query::{triples_view, Term};
use ssdkg_core::graph::{
    check_triple, evaluate_pattern, merge, parse_turtle, serialize_turtle, GraphPattern, KnowledgeGraph, NodeId,
    OntologySchema, PatternTerm, TripleCandidate, TriplePattern, TypeReason,
};
use ssdkg_core::synth::random_graph;

fn impact_graph() -> KnowledgeGraph {
    parse_turtle(include_str!("../fixtures/impact_graph.ttl")).unwrap()
}

#[test]
fn impact_query_returns_one_row_per_factor() {
    let g = impact_graph();
    let q = GraphPattern::parse(include_str!("../fixtures/impact_query.rq")).unwrap();
    let b = evaluate_pattern(&g, &q);
    let t = |s: &str| Term::Node(NodeId::term(s));
    assert_eq!(b.vars, ["factor", "impactWrite", "impactRead"]);
    assert_eq!(
        b.rows,
        vec![
            vec![t("Humidity"), t("ImpactHumWrite"), t("ImpactHumRead")],
            vec![t("Temperature"), t("ImpactTempWrite"), t("ImpactTempRead")],
        ]
    );
}

#[test]
fn single_pattern_by_hand() {
    let p = GraphPattern::new(
        vec![TriplePattern::new(PatternTerm::var("x"), PatternTerm::term("hasImpact"), PatternTerm::term("ImpactTempWrite"))],
        vec![],
    )
    .unwrap();
    let b = evaluate_pattern(&impact_graph(), &p);
    assert_eq!(b.rows, vec![vec![Term::Node(NodeId::term("Temperature"))]]);

    let p = GraphPattern::new(
        vec![TriplePattern::new(PatternTerm::var("x"), PatternTerm::term("hasImpact"), PatternTerm::term("ReadIO"))],
        vec![],
    )
    .unwrap();
    assert!(evaluate_pattern(&impact_graph(), &p).is_empty());
}

#[test]
fn impact_graph_edges_type_check_under_builtin_schema() {
    let g = impact_graph();
    let schema = OntologySchema::builtin();
    for t in g.edges() {
        let c = TripleCandidate::from_triple(t).unwrap();
        assert!(check_triple(&c, &schema, &g).is_accept(), "{t}");
    }
}

/// Brute force: every assignment of the pattern's variables over all view terms.
fn brute_force(graph: &KnowledgeGraph, pattern: &GraphPattern) -> Vec<Vec<Term>> {
    let view: HashSet<[Term; 3]> = triples_view(graph).into_iter().collect();
    let domain: Vec<Term> =
        view.iter().flat_map(|t| t.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let vars = pattern.variables();
    let mut rows = BTreeSet::new();
    let mut idx = vec![0usize; vars.len()];
    if domain.is_empty() {
        return Vec::new();
    }
    loop {
        let assign: BTreeMap<&str, &Term> = vars.iter().map(String::as_str).zip(idx.iter().map(|&i| &domain[i])).collect();
        let sub = |t: &PatternTerm| match t {
            PatternTerm::Var(v) => assign[v.as_str()].clone(),
            PatternTerm::Node(n) => Term::Node(n.clone()),
            PatternTerm::Literal(l) => Term::Literal(l.clone()),
        };
        let ok = pattern.patterns().iter().all(|p| view.contains(&[sub(&p.subject), sub(&p.relation), sub(&p.object)]))
            && pattern.values().iter().all(|(v, allowed)| allowed.contains(assign[v.as_str()]));
        if ok {
            rows.insert(pattern.select().iter().map(|v| assign[v.as_str()].clone()).collect::<Vec<_>>());
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return rows.into_iter().collect();
            }
            idx[k] += 1;
            if idx[k] < domain.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn pattern_from(graph: &KnowledgeGraph, picks: &[(u8, u8, u8, usize)], values_pick: Option<usize>) -> Option<GraphPattern> {
    let view = triples_view(graph);
    if view.is_empty() {
        return None;
    }
    let vars = ["x", "y", "z"];
    let mut pats = Vec::new();
    for &(s, r, o, i) in picks {
        let anchor = &view[i % view.len()];
        let term = |choice: u8, pos: usize| -> PatternTerm {
            if choice < 3 {
                PatternTerm::var(vars[choice as usize])
            } else {
                match &anchor[pos] {
                    Term::Node(n) => PatternTerm::Node(n.clone()),
                    Term::Literal(l) => PatternTerm::Literal(l.clone()),
                }
            }
        };
        pats.push(TriplePattern::new(term(s, 0), term(r, 1), term(o, 2)));
    }
    let mut p = GraphPattern::new(pats, vec![]).ok()?;
    if let (Some(i), Some(v)) = (values_pick, p.variables().first().cloned()) {
        let allowed: Vec<Term> = view.iter().skip(i % view.len()).take(3).map(|t| t[0].clone()).collect();
        p = p.with_values(&v, allowed).ok()?;
    }
    Some(p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn turtle_round_trip(seed in any::<u64>()) {
        let g = random_graph(seed, 120);
        let text = serialize_turtle(&g).unwrap();
        let back = parse_turtle(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize_turtle(&back).unwrap(), text);
    }

    #[test]
    fn bgp_matches_brute_force(
        seed in any::<u64>(),
        picks in prop::collection::vec((0u8..5, 0u8..5, 0u8..5, any::<usize>()), 1..4),
        values_pick in prop::option::of(any::<usize>()),
    ) {
        let g = random_graph(seed, 14);
        if let Some(p) = pattern_from(&g, &picks, values_pick) {
            let got = evaluate_pattern(&g, &p);
            prop_assert_eq!(got.rows, brute_force(&g, &p));
        }
    }

    #[test]
    fn merge_is_order_insensitive(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let gs = [random_graph(a, 30), random_graph(b, 30), random_graph(c, 30)];
        let reference = merge([&gs[0], &gs[1], &gs[2]]);
        for order in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let m = merge(order.iter().map(|&i| &gs[i]));
            match (&reference, &m) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                _ => prop_assert!(false, "merge outcome depends on order"),
            }
        }
        if let Ok(m) = &reference {
            prop_assert_eq!(&merge([m, m]).unwrap(), m);
            prop_assert_eq!(&merge([m, &KnowledgeGraph::new()]).unwrap(), m);
        }
    }

    #[test]
    fn check_triple_matches_ancestor_walk(
        parents in prop::collection::vec(prop::option::of(any::<prop::sample::Index>()), 1..10),
        rels in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 1..5),
        queries in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), 1..20),
    ) {
        let n = parents.len();
        let class = |i: usize| format!("C{i}");
        // Parent of class i is some j < i, which keeps the subclass graph acyclic.
        let parent: Vec<Option<usize>> =
            parents.iter().enumerate().map(|(i, p)| if i == 0 { None } else { p.map(|ix| ix.index(i)) }).collect();
        let axioms = parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| Axiom::SubClassOf { sub: class(i), sup: class(j) }))
            .collect();
        let relations: Vec<RelationDecl> = rels
            .iter()
            .enumerate()
            .map(|(k, (d, r))| RelationDecl {
                name: format!("r{k}"),
                domain: class(d.index(n)),
                range: class(r.index(n)),
                directional: false,
                implied_direction: None,
            })
            .collect();
        let schema = OntologySchema::new((0..n).map(class), relations.clone(), axioms, BTreeMap::new()).unwrap();
        let ancestor = |mut c: usize, target: usize| loop {
            if c == target {
                return true;
            }
            match parent[c] {
                Some(p) => c = p,
                None => return false,
            }
        };
        let g = KnowledgeGraph::new();
        for (s, r, o) in queries {
            let (sc, oc, rel) = (s.index(n), o.index(n), &relations[r.index(relations.len())]);
            let cand = TripleCandidate::new(NodeId::term("s"), rel.name.clone(), NodeId::term("o"))
                .with_classes(Some(&class(sc)), Some(&class(oc)));
            let dom: usize = rel.domain[1..].parse().unwrap();
            let rng: usize = rel.range[1..].parse().unwrap();
            let expected = if !ancestor(sc, dom) {
                Some(TypeReason::DomainViolation)
            } else if !ancestor(oc, rng) {
                Some(TypeReason::RangeViolation)
            } else {
                None
            };
            prop_assert_eq!(check_triple(&cand, &schema, &g).reason(), expected);
        }
    }
}
