#![allow(dead_code)]

use std::path::Path;

use chrono::{Duration, NaiveDate};
use ssdkg::{Engine, ServiceConfig};
use ssdkg_core::synth::fleet::{DriveRole, Fleet, FleetSpec};

pub const VALIDATION_BATCH: &str = include_str!("../../../core/fixtures/literature/validation_batch.json");
pub const CONTRADICTION_BATCH: &str = include_str!("../../../core/fixtures/literature/contradiction_batch.json");

pub fn small_spec() -> FleetSpec {
    FleetSpec { seed: 11, drives: 12, failing: 2, decoys: 1, late_failures: 1, gappy_dropped: 1, gappy_weighted: 1, ..FleetSpec::default() }
}

/// Engine over a fresh workspace with `fleet` ingested, framed and materialized.
pub fn fleet_engine(dir: &Path, fleet: &Fleet) -> Engine {
    let engine = Engine::open(ServiceConfig::new(dir)).unwrap();
    engine.ingest_and_process(&fleet.telemetry_csv()).unwrap();
    engine.load_failure_labels(&fleet.failures_csv()).unwrap();
    engine
}

pub fn tag_of(fleet: &Fleet, drive: &str) -> String {
    format!("{drive}/{}", fleet.window())
}

pub fn first_with_role(fleet: &Fleet, role: DriveRole) -> String {
    fleet.roles.iter().find(|(_, r)| **r == role).map(|(d, _)| d.clone()).expect("role present")
}

/// `days` further rows for `drive`, copying its last row with `column` shifted by `delta`.
pub fn extension_csv(fleet: &Fleet, drive: &str, from: NaiveDate, days: i64, column: &str, delta: f64) -> String {
    let csv = fleet.telemetry_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap().to_string();
    let cols: Vec<&str> = header.split(',').collect();
    let (ds, target) = (
        cols.iter().position(|c| *c == "ds").unwrap(),
        cols.iter().position(|c| *c == column).unwrap(),
    );
    let last = lines.filter(|l| l.starts_with(&format!("{drive},"))).last().unwrap().to_string();
    let mut out = header.clone();
    for i in 0..days {
        let mut cells: Vec<String> = last.split(',').map(str::to_string).collect();
        cells[ds] = (from + Duration::days(i)).to_string();
        let v: f64 = cells[target].parse().unwrap();
        cells[target] = format!("{}", v + delta);
        out.push('\n');
        out.push_str(&cells.join(","));
    }
    out.push('\n');
    out
}
