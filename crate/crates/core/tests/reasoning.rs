use std::collections::BTreeMap;
use std::fs;

use chrono::NaiveDate;
use proptest::prelude::*;
use ssdkg_core::datakg::{materialize_window, property_unit, DataSubgraph, WindowTag};
use ssdkg_core::graph::{
    AnnotationData, Direction, KnowledgeGraph, NodeId, OntologySchema, Provenance, Taxonomy, Triple,
};
use ssdkg_core::literature::{
    claims_to_graph, process_batch, register_contradictions, ExtractionBatch, DEFAULT_MIN_CONFIDENCE, DOWN_WEIGHT,
};
use ssdkg_core::reasoning::prompt::{CONTEXT_HEADER, LITERATURE_HEADER, NO_EVIDENCE, QUERY_HEADER};
use ssdkg_core::reasoning::{
    assemble_prompt, build_evidence_query, generate, parse_structured_block, rank_evidence, raw_log_context, retrieve,
    summarize_subgraph, vocabulary_terms, EvidenceItem, GenerationBackend, Perturbation, PromptOptions, QueryIntent,
    QueryKind, ReasoningError, RemoteBackend, RiskSignals, Scope, StructuredBlock, TemplateBackend,
};
use ssdkg_core::telemetry::{detect_episodes, emit_frames, DriveSeries, FrameSet, RuleRepository, Window};

fn literature(batch: &str, down_weight: bool) -> KnowledgeGraph {
    let path = format!("{}/fixtures/literature/{batch}", env!("CARGO_MANIFEST_DIR"));
    let batch = ExtractionBatch::from_json(&fs::read_to_string(path).unwrap()).unwrap();
    let out = process_batch(
        &batch,
        "lit",
        &Taxonomy::builtin(),
        &OntologySchema::builtin(),
        &KnowledgeGraph::new(),
        DEFAULT_MIN_CONFIDENCE,
    );
    let accepted = out.report.accepted;
    let weights = if down_weight { register_contradictions(&accepted, DOWN_WEIGHT).weights } else { BTreeMap::new() };
    claims_to_graph(&accepted, "lit", 1, &weights).unwrap()
}

fn intent(kind: QueryKind, perturbations: Vec<Perturbation>) -> QueryIntent {
    QueryIntent::new(kind, "Explain the risk signals and suggest mitigations.", Scope::Window("w".into()), perturbations)
        .unwrap()
}

fn cooler() -> Vec<Perturbation> {
    vec![Perturbation { factor: "Temperature".into(), delta: -5.0, unit: Some("°C".into()) }]
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 11, 9).unwrap()
}

/// r_187 climbing over the last ten days, r_5 a slow staircase, r_241 monotone.
fn failing_series() -> DriveSeries {
    let mut s = DriveSeries::new("Disk/26871", "MC1", day0(), 30);
    for d in 0..30 {
        s.set("r_187", d, if d >= 20 { (d - 19) as f64 } else { 0.0 });
        s.set("r_5", d, (d / 3) as f64);
        s.set("r_241", d, 1e6 + d as f64 * 5e3);
        s.set("temp_c", d, 38.0 + (d % 4) as f64);
    }
    s
}

fn frames_of(s: &DriveSeries) -> FrameSet {
    emit_frames(s, &Window::starting(s.start, 30), &RuleRepository::builtin()).unwrap()
}

fn subgraph_of(frames: &FrameSet) -> DataSubgraph {
    let rules = RuleRepository::builtin();
    let eps = detect_episodes(frames, &rules);
    materialize_window(frames, &eps, &rules, &WindowTag::of(frames), &Taxonomy::builtin()).unwrap()
}

#[test]
fn what_if_query_retrieves_the_planted_claim() {
    let lit = literature("validation_batch.json", false);
    let it = intent(QueryKind::WhatIf, cooler());
    let (q, items) = retrieve(&it, &["P99Latency".to_string()], &lit).unwrap();
    assert!(q.terms.contains(&"Temperature".to_string()));
    assert!(q.relations.iter().any(|r| r == "impactsMetric"));
    assert!(q.relations.iter().any(|r| r == "degrades"));
    let hit = items
        .iter()
        .find(|e| e.subject == "Temperature" && e.relation == "degrades" && e.object == "P99Latency")
        .expect("planted claim retrieved");
    assert_eq!(hit.direction, Direction::Degrades);
    assert_eq!(hit.context.as_deref(), Some("WriteHeavy"));
    assert!(!hit.evidence.is_empty() && !hit.document_id.is_empty());
}

#[test]
fn prescriptive_query_includes_mitigations() {
    let lit = literature("validation_batch.json", false);
    let it = intent(QueryKind::Prescriptive, vec![]);
    let q = build_evidence_query(&it, &["ReallocatedSectors".to_string()]).unwrap();
    assert!(q.to_sparql().contains("mitigatedBy"));
    let items = rank_evidence(&q.evaluate(&lit), &lit);
    assert!(items.iter().any(|e| e.relation == "mitigatedBy" && e.object == "DriveReplacement"));
    let d = build_evidence_query(&intent(QueryKind::Descriptive, vec![]), &["ReallocatedSectors".to_string()]).unwrap();
    assert!(!d.to_sparql().contains("mitigatedBy"));
}

#[test]
fn empty_terms_rejected() {
    let err = build_evidence_query(&intent(QueryKind::Descriptive, vec![]), &[]).unwrap_err();
    assert!(matches!(err, ReasoningError::NoTerms));
    let bad = QueryIntent::new(QueryKind::WhatIf, "q", Scope::Window("w".into()), vec![]);
    assert!(matches!(bad, Err(ReasoningError::InvalidIntent(_))));
}

#[test]
fn contradicted_claim_ranks_below_consistent_one() {
    let lit = literature("contradiction_batch.json", true);
    let it = intent(QueryKind::WhatIf, cooler());
    let (_, items) = retrieve(&it, &[], &lit).unwrap();
    assert_eq!(items.len(), 2);
    // The weaker opposing claim carries the down-weight: 0.9 × 1 ahead of 0.6 × 0.5.
    assert_eq!(items[0].claim_id, "thermal-dispute#t0");
    assert!((items[0].score - 0.9).abs() < 1e-12 && (items[1].score - 0.3).abs() < 1e-12);
    assert_eq!((items[0].rank, items[1].rank), (1, 2));

    // A down-weighted 0.9 claim (score 0.45) ranks below an unweighted 0.6 claim.
    let g = scored_graph(&[(0.9, 0.5), (0.6, 1.0)]);
    let (_, items) = retrieve(&intent(QueryKind::Descriptive, vec![]), &["Temperature".into()], &g).unwrap();
    assert_eq!(items[0].claim_id, "k001");
    assert!((items[1].score - 0.45).abs() < 1e-12);
}

/// Literature graph of `n` claims on distinct edges with the given (confidence, weight).
fn scored_graph(scores: &[(f64, f64)]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for (i, (c, w)) in scores.iter().enumerate() {
        let t = Triple::new(NodeId::term("Temperature"), NodeId::term("impactsMetric"), NodeId::term(format!("M{i:03}")));
        g.annotate(
            t,
            Provenance { document_id: format!("doc{i}"), evidence: "e".into(), collection_id: "c".into(), version: 1 },
            AnnotationData {
                claim_id: format!("k{i:03}"),
                confidence: *c,
                weight: *w,
                direction: Direction::Degrades,
                context: None,
            },
        );
    }
    g
}

#[test]
fn ranking_examples() {
    let g = scored_graph(&[(0.6, 1.0), (0.9, 1.0)]);
    let (_, items) = retrieve(&intent(QueryKind::Descriptive, vec![]), &["Temperature".into()], &g).unwrap();
    assert_eq!(items[0].claim_id, "k001");
    let g = scored_graph(&[(0.5, 1.0), (1.0, 0.5), (0.5, 1.0)]);
    let (_, items) = retrieve(&intent(QueryKind::Descriptive, vec![]), &["Temperature".into()], &g).unwrap();
    let ids: Vec<&str> = items.iter().map(|e| e.claim_id.as_str()).collect();
    assert_eq!(ids, ["k000", "k001", "k002"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ranking_is_a_permutation_invariant_total_order(
        scores in prop::collection::vec((0.0f64..=1.0, prop::sample::select(vec![0.5, 1.0])), 1..25),
        seed in any::<u64>(),
    ) {
        let g = scored_graph(&scores);
        let q = build_evidence_query(&intent(QueryKind::Descriptive, vec![]), &["Temperature".into()]).unwrap();
        let mut bindings = q.evaluate(&g);
        let base = rank_evidence(&bindings, &g);
        // Reverse and rotate the rows and branches.
        for b in &mut bindings {
            b.rows.reverse();
            let k = (seed as usize) % b.rows.len().max(1);
            b.rows.rotate_left(k);
        }
        bindings.reverse();
        prop_assert_eq!(&rank_evidence(&bindings, &g), &base);
        prop_assert_eq!(base.len(), scores.len());
        for w in base.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!(a.score > b.score || (a.score == b.score && a.claim_id < b.claim_id));
        }
        // Independent oracle: sort indices by confidence × weight, then id.
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&i, &j| (scores[j].0 * scores[j].1).total_cmp(&(scores[i].0 * scores[i].1)).then(i.cmp(&j)));
        let expect: Vec<String> = idx.iter().map(|i| format!("k{i:03}")).collect();
        let got: Vec<String> = base.iter().map(|e| e.claim_id.clone()).collect();
        prop_assert_eq!(got, expect);
    }
}

#[test]
fn summary_cites_frames_with_units_and_coverage() {
    let sg = subgraph_of(&frames_of(&failing_series()));
    let s = summarize_subgraph(&sg).unwrap();
    let r187 = s.sentences.iter().find(|x| x.starts_with("r_187")).expect("r_187 is salient");
    assert!(r187.contains("increasing trend"));
    assert!(r187.contains("count/day"));
    assert!(r187.contains("2019-11-09..2019-12-08"));
    assert!(r187.contains("coverage 30/30"));
    assert!(s.context.iter().any(|l| l.starts_with("- r_187 Reported_Uncorrectable_Errors: trend=increasing")));
    assert!(s.context.iter().any(|l| l.contains("coverage=30/30")));
    assert!(!s.sentences.iter().any(|x| x.starts_with("Data quality")));
    let slope = s.sidecar.iter().find(|c| c.property == "slope" && c.text.starts_with("r_187")).unwrap();
    assert_eq!(slope.unit, "count/day");
}

#[test]
fn sidecar_claims_resolve_to_stored_values() {
    let sg = subgraph_of(&frames_of(&failing_series()));
    let s = summarize_subgraph(&sg).unwrap();
    assert!(!s.sidecar.is_empty());
    for c in &s.sidecar {
        let node: NodeId = c.node.parse().unwrap();
        assert!(sg.graph.contains_node(&node), "{}", c.node);
        assert_eq!(sg.graph.number(&node, &c.property), Some(c.quantity));
        assert_eq!(property_unit(&sg.graph, &node, &c.property).as_deref(), Some(c.unit.as_str()));
        assert_eq!(c.window, sg.tag.to_string());
    }
}

#[test]
fn missing_days_produce_a_quality_sentence() {
    let mut series = failing_series();
    for d in [7, 15] {
        series.present[d] = false;
        for col in series.columns.values_mut() {
            col.values[d] = None;
            col.status[d] = ssdkg_core::telemetry::Obs::Missing;
        }
    }
    let s = summarize_subgraph(&subgraph_of(&frames_of(&series))).unwrap();
    let q = s.sentences.iter().find(|x| x.starts_with("Data quality")).expect("quality sentence");
    assert!(q.contains("2 missing days"), "{q}");
    assert!(s.sidecar.iter().any(|c| c.property == "missingDays" && c.quantity == 2.0));
}

#[test]
fn empty_subgraph_rejected() {
    let sg = DataSubgraph {
        tag: WindowTag::parse("d/2024-01-01..2024-01-30", 1).unwrap(),
        graph: KnowledgeGraph::new(),
        coverage: 0.0,
        weight: 1.0,
    };
    assert!(matches!(summarize_subgraph(&sg), Err(ReasoningError::EmptySubgraph(_))));
}

#[test]
fn vocabulary_covers_measured_and_env_concepts() {
    let sg = subgraph_of(&frames_of(&failing_series()));
    let terms = vocabulary_terms(&sg, &Taxonomy::builtin());
    for t in ["UncorrectableErrors", "ReallocatedSectors", "LbaWritten", "Temperature"] {
        assert!(terms.contains(&t.to_string()), "{t} missing from {terms:?}");
    }
}

fn section_positions(text: &str) -> Vec<usize> {
    let task = text.find("Task: Provide a grounded SSD analysis for").unwrap();
    let ctx = text.find(CONTEXT_HEADER).unwrap();
    let lit = text.find(LITERATURE_HEADER).unwrap();
    let q = text.find(QUERY_HEADER).unwrap();
    vec![task, ctx, lit, q]
}

fn evidence_items(n: usize) -> Vec<EvidenceItem> {
    let scores: Vec<(f64, f64)> = (0..n).map(|i| (1.0 - i as f64 / (n as f64 * 2.0), 1.0)).collect();
    let g = scored_graph(&scores);
    retrieve(&intent(QueryKind::Descriptive, vec![]), &["Temperature".into()], &g).unwrap().1
}

#[test]
fn prompt_sections_follow_the_skeleton() {
    let sg = subgraph_of(&frames_of(&failing_series()));
    let s = summarize_subgraph(&sg).unwrap();
    let lit = literature("validation_batch.json", false);
    let it = intent(QueryKind::Predictive, vec![]);
    let (_, ev) = retrieve(&it, &vocabulary_terms(&sg, &Taxonomy::builtin()), &lit).unwrap();
    assert!(!ev.is_empty());
    let doc = assemble_prompt(&it, &[s.clone()], &ev, &PromptOptions::default()).unwrap();
    let pos = section_positions(&doc.text);
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    assert!(doc.text.starts_with("Task: Provide a grounded SSD analysis for Disk/26871 over window 2019-11-09..2019-12-08."));
    assert!(!doc.truncated && doc.evidence_included == ev.len());
    assert!(doc.tokens <= doc.token_budget);
    let again = assemble_prompt(&it, &[s], &ev, &PromptOptions::default()).unwrap();
    assert_eq!(doc, again);
}

#[test]
fn zero_evidence_is_stated() {
    let s = summarize_subgraph(&subgraph_of(&frames_of(&failing_series()))).unwrap();
    let doc = assemble_prompt(&intent(QueryKind::Descriptive, vec![]), &[s], &[], &PromptOptions::default()).unwrap();
    assert_eq!(doc.literature, vec![LITERATURE_HEADER.to_string(), NO_EVIDENCE.to_string()]);
    assert!(doc.text.contains("no literature evidence retrieved"));
}

#[test]
fn evidence_truncates_by_rank() {
    let s = summarize_subgraph(&subgraph_of(&frames_of(&failing_series()))).unwrap();
    let ev = evidence_items(100);
    let opts = PromptOptions { max_evidence: Some(10), ..Default::default() };
    let doc = assemble_prompt(&intent(QueryKind::Descriptive, vec![]), &[s.clone()], &ev, &opts).unwrap();
    assert_eq!(doc.evidence_included, 10);
    assert!(doc.truncated);
    for (i, line) in doc.literature[1..=10].iter().enumerate() {
        assert!(line.starts_with(&format!("- [{}] ", i + 1)), "{line}");
    }
    assert!(doc.literature[11].contains("truncated: showing 10 of 100"));

    // A tight token budget keeps a rank prefix and stays within budget.
    let fixed = assemble_prompt(&intent(QueryKind::Descriptive, vec![]), &[s.clone()], &[], &opts).unwrap().tokens;
    let opts = PromptOptions { token_budget: fixed + 100, ..Default::default() };
    let doc = assemble_prompt(&intent(QueryKind::Descriptive, vec![]), &[s], &ev, &opts).unwrap();
    assert!(doc.truncated && doc.evidence_included > 0 && doc.evidence_included < 100);
    assert!(doc.tokens <= opts.token_budget, "{} > {}", doc.tokens, opts.token_budget);
}

fn template_run(frames: &FrameSet, kind: QueryKind, perturbations: Vec<Perturbation>) -> (String, StructuredBlock) {
    let sg = subgraph_of(frames);
    let s = summarize_subgraph(&sg).unwrap();
    let lit = literature("validation_batch.json", false);
    let it = intent(kind, perturbations);
    let (_, ev) = retrieve(&it, &vocabulary_terms(&sg, &Taxonomy::builtin()), &lit).unwrap();
    let doc = assemble_prompt(&it, &[s], &ev, &PromptOptions::default()).unwrap();
    let resp = generate(&doc.text, &TemplateBackend).unwrap();
    assert!(!resp.ungrounded, "{}", resp.text);
    (resp.text, resp.structured.unwrap())
}

#[test]
fn template_backend_fills_predictions() {
    let frames = frames_of(&failing_series());
    let (text, block) = template_run(&frames, QueryKind::Predictive, vec![]);
    assert_eq!(block.fail_flag, Some(true));
    // r_5 staircase: slope ≈ 1/3 per day dominates r_187's; ttf = 30 / max slope.
    let slopes: Vec<f64> = ["r_187", "r_5"].iter().filter_map(|a| frames.attribute(a).unwrap().temporal.slope).collect();
    let expect = (30.0 / slopes.iter().copied().fold(0.0, f64::max)).clamp(1.0, 365.0);
    assert!((block.ttf_days.unwrap() - expect).abs() < 1e-9);
    assert!(!block.claims.is_empty());

    let golden = format!("{}/fixtures/golden/template_predictive.txt", env!("CARGO_MANIFEST_DIR"));
    match fs::read_to_string(&golden) {
        Ok(g) => assert_eq!(text, g, "template output drifted from {golden}"),
        Err(_) => {
            fs::create_dir_all(std::path::Path::new(&golden).parent().unwrap()).unwrap();
            fs::write(&golden, &text).unwrap();
        }
    }
}

#[test]
fn template_backend_is_byte_deterministic() {
    let frames = frames_of(&failing_series());
    let a = template_run(&frames, QueryKind::Prescriptive, vec![]);
    let b = template_run(&frames, QueryKind::Prescriptive, vec![]);
    assert_eq!(a.0, b.0);
    assert!(a.1.recommendations.iter().any(|r| r.action == "DataMigration" && r.metric == "UncorrectableErrors"));
    assert!(TemplateBackend.deterministic());
}

#[test]
fn what_if_counterfactual_follows_evidence_direction() {
    let (_, block) = template_run(&frames_of(&failing_series()), QueryKind::WhatIf, cooler());
    let cf = block.counterfactuals.iter().find(|c| c.metric == "P99Latency").expect("temperature → p99");
    assert_eq!(cf.direction, Direction::Improves);
    assert_eq!(cf.delta, -5.0);
}

#[test]
fn structured_block_examples() {
    let ok = parse_structured_block("text\nBEGIN_STRUCTURED\nfail_flag=true\nttf_days=25\nEND_STRUCTURED\n").unwrap().unwrap();
    assert_eq!((ok.fail_flag, ok.ttf_days), (Some(true), Some(25.0)));
    assert_eq!(parse_structured_block("no block here").unwrap(), None);
    assert!(matches!(
        parse_structured_block("BEGIN_STRUCTURED\nttf_days=-3\nEND_STRUCTURED"),
        Err(ReasoningError::Validation(_))
    ));
    assert!(parse_structured_block("BEGIN_STRUCTURED\nfail_probability=1.5\nEND_STRUCTURED").is_err());
    assert!(parse_structured_block("BEGIN_STRUCTURED\nfail_flag=true\n").is_err());
}

struct Echo(&'static str);

impl GenerationBackend for Echo {
    fn id(&self) -> String {
        "echo".into()
    }
    fn deterministic(&self) -> bool {
        true
    }
    fn generate(&self, _: &str) -> Result<String, ReasoningError> {
        Ok(self.0.to_string())
    }
}

#[test]
fn unparseable_response_is_kept_and_flagged() {
    let r = generate("p", &Echo("free text only")).unwrap();
    assert!(r.ungrounded && r.structured.is_none() && r.parse_error.is_none());
    assert_eq!(r.text, "free text only");
    let r = generate("p", &Echo("BEGIN_STRUCTURED\nttf_days=-3\nEND_STRUCTURED")).unwrap();
    assert!(r.ungrounded && r.parse_error.is_some());
}

#[test]
fn unreachable_remote_backend_errors() {
    let b = RemoteBackend {
        url: "http://127.0.0.1:9/v1/chat/completions".into(),
        model: "m".into(),
        key: None,
        timeout: std::time::Duration::from_secs(2),
    };
    assert!(matches!(generate("p", &b), Err(ReasoningError::Backend { .. })));
}

#[test]
fn raw_logs_mode_reaches_the_same_decision() {
    let frames = frames_of(&failing_series());
    let raw = raw_log_context(&frames);
    assert!(raw.sidecar.is_empty() && raw.raw);
    let it = intent(QueryKind::Predictive, vec![]);
    let doc = assemble_prompt(&it, &[raw], &[], &PromptOptions::default()).unwrap();
    assert!(doc.text.contains("raw daily: "));
    let block = generate(&doc.text, &TemplateBackend).unwrap().structured.unwrap();
    assert_eq!(block.fail_flag, Some(true));
}

#[test]
fn cohort_prompt_keeps_top_k_by_rule_score() {
    let mut summaries = Vec::new();
    for (i, failing) in [(0, false), (1, true), (2, false)] {
        let mut s = failing_series();
        s.drive_id = format!("Disk/{i}");
        if !failing {
            for d in 0..30 {
                s.set("r_187", d, 0.0);
                s.set("r_5", d, 0.0);
            }
        }
        summaries.push(summarize_subgraph(&subgraph_of(&frames_of(&s))).unwrap());
    }
    let it = QueryIntent::new(
        QueryKind::Predictive,
        "Which drives will fail?",
        Scope::Cohort(summaries.iter().map(|s| s.tag.clone()).collect()),
        vec![],
    )
    .unwrap();
    let opts = PromptOptions { cohort_top_k: 2, ..Default::default() };
    let doc = assemble_prompt(&it, &summaries, &[], &opts).unwrap();
    assert_eq!(doc.windows.len(), 2);
    assert_eq!(doc.windows[0], summaries[1].tag);
    let block = generate(&doc.text, &TemplateBackend).unwrap().structured.unwrap();
    assert_eq!(block.predictions.len(), 2);
    assert!(block.predictions[0].fail_flag && !block.predictions[1].fail_flag);
    assert!(block.claims.iter().all(|c| c.claim_id.starts_with('w')));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The backend's decision, read back from prompt text, equals the rule evaluated on
    /// the frames directly.
    #[test]
    fn template_fail_flag_equals_rule_over_frames(
        r187 in prop::collection::vec(0u32..6, 30),
        r5 in prop::collection::vec(0u32..15, 30),
        sorted in any::<bool>(),
    ) {
        let mut s = DriveSeries::new("Disk/p", "MC1", day0(), 30);
        let mut a = r187.clone();
        if sorted {
            a.sort();
        }
        for d in 0..30 {
            s.set("r_187", d, a[d] as f64);
            s.set("r_5", d, r5[d] as f64);
        }
        let frames = frames_of(&s);
        let f187 = frames.attribute("r_187").unwrap();
        let f5 = frames.attribute("r_5").unwrap();
        let oracle = RiskSignals {
            r187_mk_s: f187.temporal.mann_kendall.map(|m| m.s as f64),
            r187_mk_p: f187.temporal.mann_kendall.map(|m| m.p),
            r5_exposure_days: f5.temporal.exposure.first().map(|e| e.days as f64),
            slopes: [f5.temporal.slope, f187.temporal.slope].into_iter().flatten().collect(),
        };
        let sg = subgraph_of(&frames);
        prop_assert_eq!(&RiskSignals::from_subgraph(&sg), &oracle);
        let summary = summarize_subgraph(&sg).unwrap();
        let doc = assemble_prompt(&intent(QueryKind::Predictive, vec![]), &[summary], &[], &PromptOptions::default()).unwrap();
        let block = generate(&doc.text, &TemplateBackend).unwrap().structured.unwrap();
        prop_assert_eq!(block.fail_flag, Some(oracle.fail_flag()));
        prop_assert_eq!(block.ttf_days, oracle.ttf_days());
    }

    #[test]
    fn structured_block_round_trips(
        fail in any::<bool>(),
        ttf in prop::option::of(1.0f64..365.0),
        delta in -20.0f64..20.0,
        tail in prop::option::of(0.1f64..1e4),
    ) {
        let b = StructuredBlock {
            fail_flag: Some(fail),
            ttf_days: ttf,
            tail_latency_ms: tail,
            counterfactuals: vec![ssdkg_core::reasoning::Counterfactual {
                factor: "Temperature".into(), delta, metric: "P99Latency".into(), direction: Direction::Improves,
            }],
            ..Default::default()
        };
        prop_assert_eq!(parse_structured_block(&b.render()).unwrap(), Some(b));
    }
}
