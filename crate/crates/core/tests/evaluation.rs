mod common;

use std::collections::{BTreeMap, HashMap};

use approx::assert_relative_eq;
use proptest::prelude::*;
use ssdkg_core::datakg::{DataSubgraph, WindowTag};
use ssdkg_core::evaluation::{
    bleu4, build_report, classification_metrics, counterfactual_validity, faithfulness_precision, mean_squared_error,
    rouge_l, tokenize, verify_claim, ClaimVerdict, EvalError, LabelRecord, PredictionRecord, WindowOutcome,
    FREE_TEXT_TOLERANCE, TRANSCRIPTION_TOLERANCE,
};
use ssdkg_core::graph::{Direction, KnowledgeGraph, NodeId, Taxonomy};
use ssdkg_core::reasoning::{
    assemble_prompt, generate, retrieve, summarize_subgraph, vocabulary_terms, Counterfactual, EvidenceItem,
    Perturbation, PromptOptions, QueryIntent, QueryKind, Scope, SidecarClaim, TemplateBackend,
};

fn map(pairs: &[(&str, bool)]) -> BTreeMap<String, bool> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn classification_examples() {
    let labels = map(&[("a", true), ("b", true), ("c", false), ("d", false)]);
    let preds = map(&[("a", true), ("b", false), ("c", false), ("d", false)]);
    let m = classification_metrics(&preds, &labels).unwrap();
    assert_eq!((m.counts.tp, m.counts.fp, m.counts.fn_, m.counts.tn), (1, 0, 1, 2));
    assert_eq!((m.precision.value, m.recall.value, m.accuracy.value), (Some(1.0), Some(0.5), Some(0.75)));

    let all = classification_metrics(&labels, &labels).unwrap();
    assert_eq!((all.precision.value, all.recall.value, all.accuracy.value), (Some(1.0), Some(1.0), Some(1.0)));

    let none = classification_metrics(&map(&[("a", false), ("c", false)]), &map(&[("a", true), ("c", false)])).unwrap();
    assert_eq!(none.precision.value, None);
    assert_eq!(none.precision.denominator, 0);

    let err = classification_metrics(&map(&[("a", true), ("x", true)]), &map(&[("a", true), ("y", false)])).unwrap_err();
    assert_eq!(err, EvalError::KeyMismatch { no_label: vec!["x".into()], no_prediction: vec!["y".into()] });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn classification_matches_brute_force(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..40)) {
        let preds: BTreeMap<String, bool> = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.0)).collect();
        let labels: BTreeMap<String, bool> = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.1)).collect();
        let m = classification_metrics(&preds, &labels).unwrap();
        let count = |p: bool, l: bool| pairs.iter().filter(|x| **x == (p, l)).count();
        prop_assert_eq!(m.counts.tp, count(true, true));
        prop_assert_eq!(m.counts.fp, count(true, false));
        prop_assert_eq!(m.counts.fn_, count(false, true));
        prop_assert_eq!(m.counts.tn, count(false, false));
        prop_assert_eq!(m.counts.total(), pairs.len());
        for r in [m.precision, m.recall, m.accuracy] {
            prop_assert!(r.value.is_none_or(|v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn mse_is_nonnegative_and_zero_iff_exact(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..30)) {
        let m = mean_squared_error(&pairs).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m == 0.0, pairs.iter().all(|(a, b)| a == b));
        let exact: Vec<(f64, f64)> = pairs.iter().map(|(a, _)| (*a, *a)).collect();
        prop_assert_eq!(mean_squared_error(&exact).unwrap(), 0.0);
    }
}

#[test]
fn mse_examples() {
    assert_eq!(mean_squared_error(&[(18.0, 25.0)]).unwrap(), 49.0);
    assert_relative_eq!(mean_squared_error(&[(3.2, 2.6)]).unwrap(), 0.36, max_relative = 1e-12);
    assert_eq!(mean_squared_error(&[]), Err(EvalError::Empty));
}

/// Straightforward BLEU-4: n-grams as joined strings, add-one on n ≥ 2.
fn bleu_oracle(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let grams = |t: &[String], n: usize| -> HashMap<String, i64> {
        let mut m = HashMap::new();
        for i in 0..t.len().saturating_sub(n - 1) {
            if i + n <= t.len() {
                *m.entry(t[i..i + n].join("\u{1}")).or_insert(0) += 1;
            }
        }
        m
    };
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (cg, rg) = (grams(c, n), grams(r, n));
        let total: i64 = cg.values().sum();
        let hit: i64 = cg.iter().map(|(g, k)| *k.min(rg.get(g).unwrap_or(&0))).sum();
        let p = if n == 1 { hit as f64 / total as f64 } else { (hit + 1) as f64 / (total + 1) as f64 };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / 4.0;
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    bp * log_sum.exp()
}

/// LCS by exhaustive recursion, for short inputs.
fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    match (a.split_first(), b.split_first()) {
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                1 + lcs_oracle(ra, rb)
            } else {
                lcs_oracle(ra, b).max(lcs_oracle(a, rb))
            }
        }
        _ => 0,
    }
}

#[test]
fn bleu_shared_unigrams_no_higher_ngrams() {
    let b = bleu4("a b c d", "b a d c");
    // p1 = 1, p2 = 1/4, p3 = 1/3, p4 = 1/2, BP = 1
    let expect = (1.0f64 * 0.25 * (1.0 / 3.0) * 0.5).powf(0.25);
    assert_relative_eq!(b.score, expect, max_relative = 1e-12);
    assert_relative_eq!(b.score, 0.4518, max_relative = 1e-3);
    assert_eq!(bleu4("a b c d", "a b c d").score, 1.0);
    assert_eq!(bleu4("", "a b").score, 0.0);
    assert_eq!(bleu4("x y z", "a b c").score, 0.0);
}

#[test]
fn rouge_examples() {
    assert_eq!(rouge_l("a b c d", "a x c y"), Some(0.5));
    assert_eq!(rouge_l("drive is failing", "drive is failing"), Some(1.0));
    assert_eq!(rouge_l("p q", "r s"), Some(0.0));
    assert_eq!(rouge_l("", ""), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bleu_matches_oracle(c in prop::collection::vec("[a-e]", 0..14), r in prop::collection::vec("[a-e]", 1..14)) {
        let (ct, rt) = (c.join(" "), r.join(" "));
        let got = bleu4(&ct, &rt).score;
        prop_assert!((got - bleu_oracle(&tokenize(&ct), &tokenize(&rt))).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn rouge_matches_oracle(c in prop::collection::vec("[a-d]", 0..9), r in prop::collection::vec("[a-d]", 0..9)) {
        let (ct, rt) = (tokenize(&c.join(" ")), tokenize(&r.join(" ")));
        let got = rouge_l(&c.join(" "), &r.join(" "));
        if ct.is_empty() && rt.is_empty() {
            prop_assert_eq!(got, None);
        } else {
            let l = lcs_oracle(&ct, &rt) as f64;
            let expect = if l == 0.0 { 0.0 } else {
                let (p, q) = (l / ct.len() as f64, l / rt.len() as f64);
                2.0 * p * q / (p + q)
            };
            prop_assert!((got.unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_and_disjoint_texts(words in prop::collection::vec("[a-z]{1,6}", 1..20)) {
        let t = words.join(" ");
        prop_assert_eq!(bleu4(&t, &t).score, 1.0);
        prop_assert_eq!(rouge_l(&t, &t), Some(1.0));
        let other: Vec<String> = words.iter().map(|w| format!("{w}9")).collect();
        prop_assert_eq!(bleu4(&t, &other.join(" ")).score, 0.0);
        prop_assert_eq!(rouge_l(&t, &other.join(" ")), Some(0.0));
    }
}

fn template_claims() -> (DataSubgraph, Vec<SidecarClaim>) {
    let sg = common::subgraph_of(&common::frames_of(&common::failing_series("Disk/26871")));
    let s = summarize_subgraph(&sg).unwrap();
    let it = QueryIntent::new(QueryKind::Descriptive, "Explain.", Scope::Window(s.tag.clone()), vec![]).unwrap();
    let doc = assemble_prompt(&it, &[s], &[], &PromptOptions::default()).unwrap();
    let r = generate(&doc.text, &TemplateBackend).unwrap();
    (sg, r.sidecar)
}

#[test]
fn template_claims_are_fully_faithful() {
    let (sg, claims) = template_claims();
    assert!(claims.len() >= 3);
    let fip = faithfulness_precision(&claims, &[&sg], TRANSCRIPTION_TOLERANCE);
    assert_eq!(fip.value, Some(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_corrupted_claim_costs_one_over_k(pick in any::<prop::sample::Index>(), kind in 0usize..4) {
        let (sg, mut claims) = template_claims();
        let k = claims.len();
        let i = pick.index(k);
        let c = &mut claims[i];
        match kind {
            0 => c.quantity = c.quantity * 1.5 + 1.0,
            1 => c.node = "data:frame/0000000000000000".into(),
            2 => c.unit = "furlongs".into(),
            _ => c.window = "Disk/1/2020-01-01..2020-01-30".into(),
        }
        let fip = faithfulness_precision(&claims, &[&sg], TRANSCRIPTION_TOLERANCE);
        prop_assert_eq!((fip.numerator, fip.denominator), (k - 1, k));
    }
}

#[test]
fn percentage_delta_claim_is_supported() {
    let tag = WindowTag::parse("Disk/9/2024-01-01..2024-01-30", 1).unwrap();
    let mut g = KnowledgeGraph::new();
    let frame = NodeId::data("frame", "pu");
    g.add_typed(frame.clone(), "AttributeFrame").unwrap();
    g.set_property(&frame, NodeId::term("unit"), "%");
    g.set_property(&frame, NodeId::term("delta"), 12.0);
    g.set_property(&frame, NodeId::term("last"), 40.0);
    let sg = DataSubgraph { tag: tag.clone(), graph: g, coverage: 1.0, weight: 1.0 };
    let claim = |id: &str, node: &str, prop: &str, q: f64, unit: &str| SidecarClaim {
        claim_id: id.into(),
        text: "Percentage_Used rose by 12% over 30 days".into(),
        node: node.into(),
        property: prop.into(),
        quantity: q,
        unit: unit.into(),
        window: tag.to_string(),
    };
    let rose = claim("c1", "data:frame/pu", "delta", 12.0, "%");
    assert_eq!(verify_claim(&rose, &[&sg], TRANSCRIPTION_TOLERANCE), ClaimVerdict::Supported);
    let claims = vec![
        rose,
        claim("c2", "data:frame/pu", "last", 40.0, "%"),
        claim("c3", "data:frame/missing", "delta", 12.0, "%"),
    ];
    let fip = faithfulness_precision(&claims, &[&sg], TRANSCRIPTION_TOLERANCE);
    assert_eq!((fip.numerator, fip.denominator), (2, 3));
    assert_relative_eq!(fip.value.unwrap(), 2.0 / 3.0);

    let paraphrase = claim("c4", "data:frame/pu", "delta", 12.4, "%");
    assert_eq!(verify_claim(&paraphrase, &[&sg], TRANSCRIPTION_TOLERANCE), ClaimVerdict::ValueMismatch);
    assert_eq!(verify_claim(&paraphrase, &[&sg], FREE_TEXT_TOLERANCE), ClaimVerdict::Supported);
    assert_eq!(faithfulness_precision(&[], &[&sg], TRANSCRIPTION_TOLERANCE).value, None);
}

fn thermal_evidence() -> Vec<EvidenceItem> {
    let lit = common::literature("validation_batch.json", false);
    let it = QueryIntent::new(
        QueryKind::WhatIf,
        "What if the drive ran 5 °C cooler?",
        Scope::Window("w".into()),
        vec![Perturbation { factor: "Temperature".into(), delta: -5.0, unit: None }],
    )
    .unwrap();
    retrieve(&it, &["P99Latency".into()], &lit).unwrap().1
}

fn cf(factor: &str, delta: f64, metric: &str, direction: Direction) -> Counterfactual {
    Counterfactual { factor: factor.into(), delta, metric: metric.into(), direction }
}

#[test]
fn counterfactual_examples() {
    let ev = thermal_evidence();
    let cooler = cf("Temperature", -5.0, "P99Latency", Direction::Improves);
    assert_eq!(counterfactual_validity(&[cooler.clone()], &ev, false).value, Some(1.0));
    let wrong = cf("Temperature", -5.0, "P99Latency", Direction::Degrades);
    assert_eq!(counterfactual_validity(&[wrong], &ev, false).value, Some(0.0));

    let absent = cf("Altitude", 100.0, "P99Latency", Direction::Degrades);
    let counted = counterfactual_validity(&[cooler.clone(), absent.clone()], &ev, false);
    assert_eq!((counted.numerator, counted.denominator), (1, 2));
    let excluded = counterfactual_validity(&[cooler, absent], &ev, true);
    assert_eq!((excluded.numerator, excluded.denominator), (1, 1));
    assert_eq!(counterfactual_validity(&[], &ev, false).value, None);
}

#[test]
fn template_what_if_statements_are_valid() {
    let sg = common::subgraph_of(&common::frames_of(&common::failing_series("Disk/26871")));
    let s = summarize_subgraph(&sg).unwrap();
    let lit = common::literature("validation_batch.json", false);
    let it = QueryIntent::new(
        QueryKind::WhatIf,
        "What if the drive ran 5 °C cooler?",
        Scope::Window(s.tag.clone()),
        vec![Perturbation { factor: "Temperature".into(), delta: -5.0, unit: Some("°C".into()) }],
    )
    .unwrap();
    let (_, ev) = retrieve(&it, &vocabulary_terms(&sg, &Taxonomy::builtin()), &lit).unwrap();
    let doc = assemble_prompt(&it, &[s], &ev, &PromptOptions::default()).unwrap();
    let block = generate(&doc.text, &TemplateBackend).unwrap().structured.unwrap();
    assert!(!block.counterfactuals.is_empty());
    assert_eq!(counterfactual_validity(&block.counterfactuals, &ev, false).value, Some(1.0));
}

#[test]
fn report_excludes_ungrounded_windows() {
    let labels: BTreeMap<String, LabelRecord> = [
        ("w1", true, Some(25.0)),
        ("w2", false, None),
        ("w3", true, Some(10.0)),
    ]
    .into_iter()
    .map(|(t, f, ttf)| (t.to_string(), LabelRecord { tag: t.into(), fail: f, ttf_days: ttf, tail_latency_ms: None }))
    .collect();
    let outcome = |tag: &str, pred: Option<(bool, Option<f64>)>| WindowOutcome {
        tag: tag.into(),
        prediction: pred.map(|(fail, ttf_days)| PredictionRecord { fail, ttf_days, tail_latency_ms: None }),
        text: "the drive is failing".into(),
        reference: Some("the drive is failing".into()),
        fip: None,
        cfv: None,
    };
    let outcomes = vec![
        outcome("w1", Some((true, Some(18.0)))),
        outcome("w2", Some((false, None))),
        outcome("w3", None),
    ];
    let r = build_report(&labels, &outcomes).unwrap();
    assert_eq!((r.evaluated, r.ungrounded, r.windows), (2, 1, 3));
    assert_eq!(r.recall.value, Some(1.0));
    assert_eq!(r.mse_ttf.value, Some(49.0));
    assert_eq!(r.bleu4.value, Some(1.0));
    assert_eq!(r.fip.value, None);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["ungrounded"], 1);
    assert!(json["fip"]["value"].is_null());
    assert!(r.to_table().contains("TTF-MSE"));
    let csv = r.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(3).unwrap().starts_with("w3,true,,10,"));

    let err = build_report(&labels, &outcomes[..2]).unwrap_err();
    assert!(matches!(err, EvalError::KeyMismatch { no_prediction, .. } if no_prediction == vec!["w3".to_string()]));
}
