//! Seeded synthetic fleet: daily telemetry for N drives over one window, a subset with a
//! planted failure signature (monotone r_5 growth past its threshold plus r_187 spike
//! days), and failure dates for labeling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::telemetry::{DriveSeries, Window, DATE_FORMAT, WORKLOAD_CATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub seed: u64,
    pub drives: usize,
    pub days: usize,
    pub start: NaiveDate,
    /// Drives carrying the failure signature; each fails 1..=20 days after the window.
    pub failing: usize,
    /// Healthy drives whose r_5 crosses the threshold for only two days.
    pub decoys: usize,
    /// Healthy drives that fail long after the labeling horizon.
    pub late_failures: usize,
    /// Healthy drives with a 14-day outage (coverage below the keep threshold).
    pub gappy_dropped: usize,
    /// Healthy drives missing six scattered days (down-weighted).
    pub gappy_weighted: usize,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            drives: 100,
            days: 30,
            start: NaiveDate::from_ymd_opt(2024, 3, 1).expect("valid date"),
            failing: 10,
            decoys: 5,
            late_failures: 3,
            gappy_dropped: 4,
            gappy_weighted: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveRole {
    Failing,
    Decoy,
    LateFailure,
    GappyDropped,
    GappyWeighted,
    Healthy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub spec: FleetSpec,
    pub series: Vec<DriveSeries>,
    pub roles: BTreeMap<String, DriveRole>,
    pub failures: BTreeMap<String, NaiveDate>,
}

const CSV_COLUMNS: [&str; 12] = [
    "r_5", "r_9", "r_12", "r_187", "r_194", "r_241", "r_242", "temp_c", "rh_pct", "read_share", "avg_queue_depth",
    "io_count",
];

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl Fleet {
    pub fn window(&self) -> Window {
        Window::starting(self.spec.start, self.spec.days)
    }

    pub fn planted(&self) -> BTreeSet<String> {
        self.roles.iter().filter(|(_, r)| **r == DriveRole::Failing).map(|(d, _)| d.clone()).collect()
    }

    /// One row per present day; missing cells are empty.
    pub fn telemetry_csv(&self) -> String {
        let mut out = format!("disk_id,ds,model,workload_tag,{}\n", CSV_COLUMNS.join(","));
        for s in &self.series {
            for d in (0..s.days).filter(|&d| s.present[d]) {
                let tag = s.workload_tag.as_ref().and_then(|t| t[d].clone()).unwrap_or_default();
                write!(out, "{},{},{},{}", s.drive_id, s.date(d).format(DATE_FORMAT), s.model, tag).expect("string write");
                for c in CSV_COLUMNS {
                    match s.column(c).and_then(|col| col.values[d]) {
                        Some(v) => write!(out, ",{v}"),
                        None => write!(out, ","),
                    }
                    .expect("string write");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("disk_id,failure_date\n");
        for (d, date) in &self.failures {
            writeln!(out, "{d},{}", date.format(DATE_FORMAT)).expect("string write");
        }
        out
    }
}

struct Drive<'a> {
    s: DriveSeries,
    rng: &'a mut ChaCha8Rng,
}

impl Drive<'_> {
    /// Usage counters and context columns shared by every role.
    fn background(&mut self) {
        let days = self.s.days;
        let temp = Normal::new(self.rng.random_range(33.0..42.0), 1.5).expect("valid normal");
        let hours0 = self.rng.random_range(5_000.0..30_000.0_f64).round();
        let cycles = self.rng.random_range(10..200) as f64;
        let mut written = self.rng.random_range(1e9..5e9_f64).round();
        let mut read = self.rng.random_range(1e9..5e9_f64).round();
        let read_share: f64 = self.rng.random_range(0.2..0.8);
        let category = WORKLOAD_CATEGORIES[self.rng.random_range(0..WORKLOAD_CATEGORIES.len())];
        let mut tags = vec![None; days];
        for d in 0..days {
            let t = round2(temp.sample(self.rng));
            written += self.rng.random_range(1e6..5e7_f64).round();
            read += self.rng.random_range(1e6..5e7_f64).round();
            self.s.set("r_9", d, hours0 + 24.0 * d as f64);
            self.s.set("r_12", d, cycles);
            self.s.set("r_194", d, t + 2.0);
            self.s.set("r_241", d, written);
            self.s.set("r_242", d, read);
            self.s.set("temp_c", d, t);
            self.s.set("rh_pct", d, round2(self.rng.random_range(35.0..55.0)));
            self.s.set("read_share", d, round2((read_share + self.rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)));
            self.s.set("avg_queue_depth", d, round2(self.rng.random_range(2.0..12.0)));
            self.s.set("io_count", d, self.rng.random_range(100_000..900_000) as f64);
            tags[d] = Some(category.to_string());
        }
        self.s.workload_tag = Some(tags);
    }

    fn flat(&mut self, column: &str, value: f64) {
        for d in 0..self.s.days {
            self.s.set(column, d, value);
        }
    }

    /// r_5 grows by at least one per day after onset and ends above 13; r_187 steps up
    /// on three to five spike days after onset.
    fn plant_failure(&mut self) {
        let days = self.s.days;
        let onset = self.rng.random_range(days * 4 / 15..=days * 8 / 15);
        let base = self.rng.random_range(0..=3) as f64;
        let span = (days - 1 - onset) as f64;
        let growth = ((14.0 - base) / span).ceil().max(1.0);
        for d in 0..days {
            self.s.set("r_5", d, base + growth * d.saturating_sub(onset) as f64);
        }
        let mut spike_days: Vec<usize> = (onset..days).collect();
        spike_days.shuffle(self.rng);
        spike_days.truncate(self.rng.random_range(3..=5));
        spike_days.sort_unstable();
        let mut level = 0.0;
        let mut next = spike_days.iter().peekable();
        for d in 0..days {
            if next.peek().is_some_and(|&&s| s == d) {
                level += self.rng.random_range(1..=4) as f64;
                next.next();
            }
            self.s.set("r_187", d, level);
        }
    }

    fn healthy_media(&mut self) {
        let base = self.rng.random_range(0..=4) as f64;
        self.flat("r_5", base);
        let errors = if self.rng.random_bool(0.2) { self.rng.random_range(1..=3) as f64 } else { 0.0 };
        self.flat("r_187", errors);
    }

    /// Removes every value on the given days, as if the collector produced no row.
    fn drop_days(&mut self, days: impl IntoIterator<Item = usize>) {
        let n = self.s.days;
        let mut fresh = DriveSeries::new(&self.s.drive_id, &self.s.model, self.s.start, n);
        let removed: BTreeSet<usize> = days.into_iter().collect();
        for (name, col) in &self.s.columns {
            for d in (0..n).filter(|d| !removed.contains(d)) {
                if let Some(v) = col.values[d] {
                    fresh.set(name, d, v);
                }
            }
        }
        fresh.workload_tag = self
            .s
            .workload_tag
            .take()
            .map(|t| t.into_iter().enumerate().map(|(d, v)| if removed.contains(&d) { None } else { v }).collect());
        self.s = fresh;
    }
}

pub fn generate_fleet(spec: &FleetSpec) -> Fleet {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut roles = Vec::with_capacity(spec.drives);
    for (role, n) in [
        (DriveRole::Failing, spec.failing),
        (DriveRole::Decoy, spec.decoys),
        (DriveRole::LateFailure, spec.late_failures),
        (DriveRole::GappyDropped, spec.gappy_dropped),
        (DriveRole::GappyWeighted, spec.gappy_weighted),
    ] {
        roles.extend(std::iter::repeat_n(role, n));
    }
    roles.truncate(spec.drives);
    roles.resize(spec.drives, DriveRole::Healthy);
    roles.shuffle(&mut rng);

    let end = spec.start + Duration::days(spec.days as i64 - 1);
    let mut fleet = Fleet { spec: spec.clone(), series: Vec::new(), roles: BTreeMap::new(), failures: BTreeMap::new() };
    for (i, role) in roles.into_iter().enumerate() {
        let id = format!("D{i:04}");
        let model = ["MA1", "MB2", "MC1"][i % 3];
        let mut drive = Drive { s: DriveSeries::new(&id, model, spec.start, spec.days), rng: &mut rng };
        drive.background();
        match role {
            DriveRole::Failing => drive.plant_failure(),
            DriveRole::Decoy => {
                drive.healthy_media();
                let n = drive.s.days;
                for d in n - 2..n {
                    drive.s.set("r_5", d, 11.0);
                }
            }
            _ => drive.healthy_media(),
        }
        match role {
            DriveRole::GappyDropped => {
                let from = drive.rng.random_range(3..spec.days.saturating_sub(17).max(4));
                drive.drop_days(from..from + 14);
            }
            DriveRole::GappyWeighted => {
                // Three two-day gaps, each short enough to impute.
                let third = spec.days / 3;
                let gaps: Vec<usize> = (0..3).map(|k| k * third + drive.rng.random_range(1..third - 2)).collect();
                drive.drop_days(gaps.iter().flat_map(|&g| [g, g + 1]));
            }
            _ => {}
        }
        let failure = match role {
            DriveRole::Failing => Some(end + Duration::days(drive.rng.random_range(1..=20))),
            DriveRole::LateFailure => Some(end + Duration::days(drive.rng.random_range(60..=120))),
            _ => None,
        };
        let series = drive.s;
        if let Some(f) = failure {
            fleet.failures.insert(id.clone(), f);
        }
        fleet.roles.insert(id, role);
        fleet.series.push(series);
    }
    fleet
}
