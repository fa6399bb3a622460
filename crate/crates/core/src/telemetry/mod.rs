//! Daily drive telemetry: CSV loading, gap imputation, window statistics and typed frames.
//!
//! A [`DriveSeries`] is dense over calendar days from its first to its last record.
//! Every numeric value carries an [`Obs`] status; days without a source row are
//! `Missing` in every column.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod episodes;
pub mod frames;
pub mod rules;
pub mod stats;

pub use episodes::{detect_episodes, Episode, EpisodeKind};
pub use frames::{emit_frames, AttributeFrame, DataQualityFrame, EnvFrame, FrameSet, WorkloadFrame};
pub use rules::{AttributeSpec, Group, Ideal, RuleRepository};
pub use stats::{change_points, mann_kendall, MannKendall};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Closed set of workload category tags.
pub const WORKLOAD_CATEGORIES: [&str; 8] = ["WSM", "RM", "WPS", "SS", "DB", "WS", "DAE", "NAS"];

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("telemetry source has no data rows")]
    Empty,
    #[error("telemetry header is missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate telemetry row for drive {drive} on {date}")]
    Duplicate { drive: String, date: NaiveDate },
    #[error("telemetry row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("rule repository error: {0}")]
    Rules(String),
    #[error("window error: {0}")]
    Window(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Obs {
    Observed,
    Imputed,
    Missing,
}

/// Inclusive calendar-day range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, TelemetryError> {
        if end < start {
            return Err(TelemetryError::Window(format!("{end} precedes {start}")));
        }
        Ok(Self { start, end })
    }

    /// Window of `days` days starting at `start`.
    pub fn starting(start: NaiveDate, days: usize) -> Self {
        Self { start, end: start + Duration::days(days.max(1) as i64 - 1) }
    }

    /// Window of `days` days ending at `end`.
    pub fn ending(end: NaiveDate, days: usize) -> Self {
        Self { start: end - Duration::days(days.max(1) as i64 - 1), end }
    }

    pub fn len_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn day(&self, offset: usize) -> NaiveDate {
        self.start + Duration::days(offset as i64)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start.format(DATE_FORMAT), self.end.format(DATE_FORMAT))
    }
}

impl FromStr for Window {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| TelemetryError::Window(format!("`{s}` is not start..end")))?;
        let parse = |d: &str| {
            NaiveDate::parse_from_str(d.trim(), DATE_FORMAT)
                .map_err(|e| TelemetryError::Window(format!("bad date `{d}`: {e}")))
        };
        Window::new(parse(a)?, parse(b)?)
    }
}

impl Serialize for Window {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub values: Vec<Option<f64>>,
    pub status: Vec<Obs>,
}

impl Column {
    fn missing(len: usize) -> Self {
        Self { values: vec![None; len], status: vec![Obs::Missing; len] }
    }

    fn set(&mut self, day: usize, value: f64) {
        self.values[day] = Some(value);
        self.status[day] = Obs::Observed;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSeries {
    pub drive_id: String,
    pub model: String,
    /// Date of day index 0.
    pub start: NaiveDate,
    pub days: usize,
    /// Whether the source had a row for the day.
    pub present: Vec<bool>,
    pub columns: BTreeMap<String, Column>,
    /// `None` when the source has no `workload_tag` column.
    pub workload_tag: Option<Vec<Option<String>>>,
    /// Validity flags per day, e.g. `non-monotone:r_241`.
    pub flags: Vec<BTreeSet<String>>,
}

impl DriveSeries {
    pub fn new(drive_id: &str, model: &str, start: NaiveDate, days: usize) -> Self {
        Self {
            drive_id: drive_id.to_string(),
            model: model.to_string(),
            start,
            days,
            present: vec![false; days],
            columns: BTreeMap::new(),
            workload_tag: None,
            flags: vec![BTreeSet::new(); days],
        }
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.days.saturating_sub(1))
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn span(&self) -> Window {
        Window { start: self.start, end: self.end() }
    }

    /// Day index of a date, when it falls inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let i = (date - self.start).num_days();
        (0..self.days as i64).contains(&i).then_some(i as usize)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    /// Records an observed value, creating the column on first use.
    pub fn set(&mut self, column: &str, day: usize, value: f64) {
        let len = self.days;
        self.present[day] = true;
        self.columns.entry(column.to_string()).or_insert_with(|| Column::missing(len)).set(day, value);
    }

    /// Window view of one column: (value, status) per window day; days outside the
    /// series are missing.
    pub fn window_values(&self, column: &str, window: &Window) -> Option<Vec<(Option<f64>, Obs)>> {
        let col = self.columns.get(column)?;
        Some(
            (0..window.len_days())
                .map(|d| match self.index_of(window.day(d)) {
                    Some(i) => (col.values[i], col.status[i]),
                    None => (None, Obs::Missing),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct TelemetrySet {
    pub series: BTreeMap<String, DriveSeries>,
    pub warnings: Vec<String>,
}

const REQUIRED: [&str; 3] = ["disk_id", "ds", "model"];

fn parse_date(s: &str, row: usize) -> Result<NaiveDate, TelemetryError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| TelemetryError::Row { row, message: format!("bad date `{s}`: {e}") })
}

/// Loads daily telemetry CSV. Unknown columns are ignored with a warning; cells that do
/// not parse as finite numbers are missing, also with a warning.
pub fn load_telemetry<R: Read>(source: R, rules: &RuleRepository) -> Result<TelemetrySet, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(source);
    let headers = rdr.headers().map_err(|e| TelemetryError::Csv(e.to_string()))?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    for r in REQUIRED {
        if idx(r).is_none() {
            return Err(TelemetryError::MissingColumn(r.to_string()));
        }
    }
    let mut out = TelemetrySet::default();
    let mut numeric = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if REQUIRED.contains(&h) || h == "workload_tag" {
            continue;
        }
        if rules.known_numeric(h) {
            numeric.push((i, h.to_string()));
        } else {
            out.warnings.push(format!("ignoring unknown column `{h}`"));
        }
    }
    let (di, dsi, mi, ti) = (idx("disk_id").unwrap(), idx("ds").unwrap(), idx("model").unwrap(), idx("workload_tag"));

    // drive -> date -> (csv row number, record)
    let mut rows: BTreeMap<String, BTreeMap<NaiveDate, (usize, csv::StringRecord)>> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 2;
        let rec = rec.map_err(|e| TelemetryError::Csv(e.to_string()))?;
        let drive = rec[di].to_string();
        if drive.is_empty() {
            return Err(TelemetryError::Row { row, message: "empty disk_id".into() });
        }
        let date = parse_date(&rec[dsi], row)?;
        let per = rows.entry(drive.clone()).or_default();
        if per.insert(date, (row, rec)).is_some() {
            return Err(TelemetryError::Duplicate { drive, date });
        }
    }
    if rows.is_empty() {
        return Err(TelemetryError::Empty);
    }

    for (drive, per) in rows {
        let first = *per.keys().next().expect("non-empty");
        let last = *per.keys().next_back().expect("non-empty");
        let days = (last - first).num_days() as usize + 1;
        let model = per.values().next().map(|(_, r)| r[mi].to_string()).unwrap_or_default();
        let mut s = DriveSeries::new(&drive, &model, first, days);
        for (_, h) in &numeric {
            s.columns.insert(h.clone(), Column::missing(days));
        }
        if ti.is_some() {
            s.workload_tag = Some(vec![None; days]);
        }
        for (date, (row, rec)) in &per {
            let day = s.index_of(*date).expect("inside span");
            s.present[day] = true;
            if rec[mi] != *model {
                out.warnings.push(format!("row {row}: model `{}` differs from `{model}` for {drive}", &rec[mi]));
            }
            for (i, h) in &numeric {
                let cell = &rec[*i];
                if cell.is_empty() {
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        if let Some((lo, hi)) = rules.env(h).and_then(|e| e.range) {
                            if !(lo..=hi).contains(&v) {
                                s.flags[day].insert(format!("sensor-check:{h}"));
                                continue;
                            }
                        }
                        s.set(h, day, v);
                    }
                    _ => out.warnings.push(format!("row {row}: `{h}` value `{cell}` is not a finite number")),
                }
            }
            if let (Some(t), Some(tags)) = (ti, s.workload_tag.as_mut()) {
                let tag = rec[t].trim();
                if !tag.is_empty() {
                    tags[day] = Some(tag.to_string());
                }
            }
        }
        flag_non_monotone(&mut s, rules);
        out.series.insert(drive, s);
    }
    Ok(out)
}

/// Flags every observed value of a monotone counter that is below the previous observed value.
pub fn flag_non_monotone(series: &mut DriveSeries, rules: &RuleRepository) {
    for spec in rules.attributes.iter().filter(|a| a.monotone) {
        let Some(col) = series.columns.get(&spec.id) else { continue };
        let mut last: Option<f64> = None;
        let mut bad = Vec::new();
        for (day, (v, st)) in col.values.iter().zip(&col.status).enumerate() {
            if *st != Obs::Observed {
                continue;
            }
            let v = v.expect("observed has a value");
            if last.is_some_and(|l| v < l) {
                bad.push(day);
            }
            last = Some(v);
        }
        for day in bad {
            series.flags[day].insert(format!("non-monotone:{}", spec.id));
        }
    }
}

/// Fills interior gaps of at most `max_gap` days by linear interpolation between the
/// observed neighbors. Observed values are never altered; leading and trailing gaps
/// stay missing.
pub fn impute_gaps(series: &DriveSeries, rules: &RuleRepository) -> DriveSeries {
    let mut out = series.clone();
    let max_gap = rules.imputation.max_gap;
    for col in out.columns.values_mut() {
        let observed: Vec<usize> = (0..col.status.len()).filter(|&i| col.status[i] == Obs::Observed).collect();
        for w in observed.windows(2) {
            let (a, b) = (w[0], w[1]);
            let gap = b - a - 1;
            if gap == 0 || gap > max_gap {
                continue;
            }
            let (va, vb) = (col.values[a].expect("observed"), col.values[b].expect("observed"));
            for i in a + 1..b {
                let t = (i - a) as f64 / (b - a) as f64;
                col.values[i] = Some(va + t * (vb - va));
                col.status[i] = Obs::Imputed;
            }
        }
    }
    out
}

/// Failure labels: `disk_id, failure_date`.
pub fn load_failure_labels<R: Read>(source: R) -> Result<BTreeMap<String, NaiveDate>, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(|e| TelemetryError::Csv(e.to_string()))?.clone();
    let di = headers.iter().position(|h| h == "disk_id").ok_or_else(|| TelemetryError::MissingColumn("disk_id".into()))?;
    let fi = headers
        .iter()
        .position(|h| h == "failure_date")
        .ok_or_else(|| TelemetryError::MissingColumn("failure_date".into()))?;
    let mut out = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TelemetryError::Csv(e.to_string()))?;
        let date = parse_date(&rec[fi], n + 2)?;
        if out.insert(rec[di].to_string(), date).is_some() {
            return Err(TelemetryError::Duplicate { drive: rec[di].to_string(), date });
        }
    }
    Ok(out)
}
