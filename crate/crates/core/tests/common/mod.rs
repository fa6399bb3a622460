#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;

use chrono::NaiveDate;
use ssdkg_core::datakg::{materialize_window, DataSubgraph, WindowTag};
use ssdkg_core::graph::{KnowledgeGraph, OntologySchema, Taxonomy};
use ssdkg_core::literature::{
    claims_to_graph, process_batch, register_contradictions, ExtractionBatch, DEFAULT_MIN_CONFIDENCE, DOWN_WEIGHT,
};
use ssdkg_core::telemetry::{detect_episodes, emit_frames, DriveSeries, FrameSet, RuleRepository, Window};

pub fn literature(batch: &str, down_weight: bool) -> KnowledgeGraph {
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

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 11, 9).unwrap()
}

/// r_187 climbing over the last ten days, r_5 a slow staircase, r_241 monotone.
pub fn failing_series(drive: &str) -> DriveSeries {
    let mut s = DriveSeries::new(drive, "MC1", day0(), 30);
    for d in 0..30 {
        s.set("r_187", d, if d >= 20 { (d - 19) as f64 } else { 0.0 });
        s.set("r_5", d, (d / 3) as f64);
        s.set("r_241", d, 1e6 + d as f64 * 5e3);
        s.set("temp_c", d, 38.0 + (d % 4) as f64);
    }
    s
}

pub fn frames_of(s: &DriveSeries) -> FrameSet {
    emit_frames(s, &Window::starting(s.start, 30), &RuleRepository::builtin()).unwrap()
}

pub fn subgraph_of(frames: &FrameSet) -> DataSubgraph {
    let rules = RuleRepository::builtin();
    let eps = detect_episodes(frames, &rules);
    materialize_window(frames, &eps, &rules, &WindowTag::of(frames), &Taxonomy::builtin()).unwrap()
}
