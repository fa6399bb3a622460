//! Typed window frames. Level summaries use observed and imputed values; trend, change
//! point, spike and exposure statistics use observed values only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rules::{AttributeSpec, Group, Ideal, RuleRepository, Threshold};
use super::stats::{self, MannKendall};
use super::{DriveSeries, Obs, TelemetryError, Window, WORKLOAD_CATEGORIES};
use crate::graph::stable_id;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub window_days: usize,
    pub observed: usize,
    pub imputed: usize,
    pub missing: usize,
    /// observed / window_days
    pub coverage: f64,
}

impl Quality {
    pub fn from_status(status: &[Obs]) -> Self {
        let count = |o: Obs| status.iter().filter(|s| **s == o).count();
        let observed = count(Obs::Observed);
        Self {
            window_days: status.len(),
            observed,
            imputed: count(Obs::Imputed),
            missing: count(Obs::Missing),
            coverage: if status.is_empty() { 0.0 } else { observed as f64 / status.len() as f64 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p95: f64,
    pub first: f64,
    pub last: f64,
    pub max: f64,
    /// last − first
    pub delta: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        let first = *values.first()?;
        let last = *values.last()?;
        Some(Self {
            median: stats::median(values)?,
            p95: stats::quantile(values, 0.95)?,
            first,
            last,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            delta: last - first,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub threshold: Threshold,
    /// Observed days beyond the threshold.
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Temporal {
    /// Per-day least-squares slope over observed days.
    pub slope: Option<f64>,
    pub mann_kendall: Option<MannKendall>,
    /// 0-based window day offsets where a new segment starts.
    pub change_points: Vec<usize>,
    pub spike_days: Vec<usize>,
    pub exposure: Vec<Exposure>,
    /// Autocorrelation at the configured seasonal lag.
    pub seasonality: Option<f64>,
    /// Coefficient of variation of day-over-day increments (cumulative counters only).
    pub burstiness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFrame {
    pub frame_id: String,
    pub drive_id: String,
    pub window: Window,
    pub attribute: String,
    pub name: String,
    pub group: Group,
    pub ideal: Ideal,
    pub unit: String,
    pub concept: String,
    pub method: String,
    pub summary: Summary,
    pub temporal: Temporal,
    pub quality: Quality,
    /// Observed and imputed values by window day.
    pub daily: Vec<Option<f64>>,
    pub status: Vec<Obs>,
}

impl AttributeFrame {
    /// Observed values by window day; imputed days are `None`.
    pub fn observed_daily(&self) -> Vec<Option<f64>> {
        self.daily.iter().zip(&self.status).map(|(v, s)| if *s == Obs::Observed { *v } else { None }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFrame {
    pub frame_id: String,
    pub drive_id: String,
    pub window: Window,
    /// Median over observed days, in [0, 1].
    pub read_share: Option<f64>,
    pub avg_queue_depth: Option<f64>,
    /// Coefficient of variation of daily io counts.
    pub burstiness: Option<f64>,
    /// Most frequent tag from the closed category set; ties go to the lexically smaller tag.
    pub category: Option<String>,
    pub units: BTreeMap<String, String>,
    pub quality: Quality,
    /// Observed values per workload column by window day.
    pub daily: BTreeMap<String, Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub start: usize,
    pub end: usize,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub column: String,
    pub concept: String,
    pub unit: String,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub excursions: Vec<Excursion>,
    pub quality: Quality,
    pub daily: Vec<Option<f64>>,
    pub status: Vec<Obs>,
}

impl EnvSummary {
    pub fn observed_daily(&self) -> Vec<Option<f64>> {
        self.daily.iter().zip(&self.status).map(|(v, s)| if *s == Obs::Observed { *v } else { None }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFrame {
    pub frame_id: String,
    pub drive_id: String,
    pub window: Window,
    /// Keyed by factor name (temperature, humidity, ...).
    pub factors: BTreeMap<String, EnvSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataQualityFrame {
    pub frame_id: String,
    pub drive_id: String,
    pub window: Window,
    /// Fraction of window days with at least one observed value, per source
    /// (`smart`, `workload`, `environment`).
    pub coverage: BTreeMap<String, f64>,
    pub attributes: BTreeMap<String, Quality>,
    /// Days on which at least one catalog attribute is neither observed nor imputed.
    pub missing_days: usize,
    /// Days without any source row.
    pub absent_rows: usize,
    pub imputed_values: usize,
    /// `day <offset>: <flag>` for sensor checks.
    pub sensor_flags: Vec<String>,
    /// `day <offset>: <flag>` for validity flags such as counter regressions.
    pub validity_flags: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSet {
    pub drive_id: String,
    pub model: String,
    pub window: Window,
    pub rules_version: u32,
    pub attributes: Vec<AttributeFrame>,
    pub workload: Option<WorkloadFrame>,
    pub env: Option<EnvFrame>,
    pub quality: DataQualityFrame,
}

impl FrameSet {
    pub fn attribute(&self, id: &str) -> Option<&AttributeFrame> {
        self.attributes.iter().find(|f| f.attribute == id)
    }

    pub fn frame_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.attributes.iter().map(|f| f.frame_id.clone()).collect();
        ids.extend(self.workload.iter().map(|f| f.frame_id.clone()));
        ids.extend(self.env.iter().map(|f| f.frame_id.clone()));
        ids.push(self.quality.frame_id.clone());
        ids
    }

    /// Minimum attribute coverage; 0 without attribute frames.
    pub fn coverage(&self) -> f64 {
        self.attributes.iter().map(|f| f.quality.coverage).reduce(f64::min).unwrap_or(0.0)
    }
}

pub fn frame_id(drive: &str, window: &Window, key: &str) -> String {
    stable_id(&[drive, &window.to_string(), key])
}

fn observed_points(cells: &[(Option<f64>, Obs)]) -> (Vec<f64>, Vec<f64>) {
    cells
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| *s == Obs::Observed)
        .map(|(d, (v, _))| (d as f64, v.expect("observed has a value")))
        .unzip()
}

fn attribute_frame(
    series: &DriveSeries,
    window: &Window,
    spec: &AttributeSpec,
    rules: &RuleRepository,
    notes: &mut Vec<String>,
) -> Option<AttributeFrame> {
    let cells = series.window_values(&spec.id, window)?;
    let status: Vec<Obs> = cells.iter().map(|c| c.1).collect();
    let quality = Quality::from_status(&status);
    if quality.observed == 0 {
        notes.push(format!("{}: no observations in window; frame omitted", spec.id));
        return None;
    }
    let daily: Vec<Option<f64>> = cells.iter().map(|(v, s)| if *s == Obs::Missing { None } else { *v }).collect();
    let level: Vec<f64> = daily.iter().flatten().copied().collect();
    let (days, obs) = observed_points(&cells);

    let mann_kendall = stats::mann_kendall(&obs).ok();
    if mann_kendall.is_none() {
        notes.push(format!("{}: trend test needs at least 2 observed values", spec.id));
    }
    let mut change_points = Vec::new();
    if spec.change_points {
        if obs.len() < 2 * rules.change_points.min_segment {
            notes.push(format!(
                "{}: change points need at least {} observed values",
                spec.id,
                2 * rules.change_points.min_segment
            ));
        }
        change_points = stats::change_points(&obs, &rules.change_points).into_iter().map(|i| days[i] as usize).collect();
    }
    let spike_days = match (stats::median(&obs), stats::mad(&obs)) {
        (Some(m), Some(mad)) => {
            let limit = m + rules.spike_mad_k * mad;
            days.iter().zip(&obs).filter(|(_, v)| **v > limit).map(|(d, _)| *d as usize).collect()
        }
        _ => Vec::new(),
    };
    let exposure = spec
        .thresholds
        .iter()
        .map(|t| Exposure { threshold: *t, days: obs.iter().filter(|v| t.exceeded(**v)).count() })
        .collect();
    let observed_daily: Vec<Option<f64>> =
        cells.iter().map(|(v, s)| if *s == Obs::Observed { *v } else { None }).collect();
    let burstiness = spec
        .monotone
        .then(|| {
            let inc: Vec<f64> = observed_daily.windows(2).filter_map(|w| Some(w[1]? - w[0]?)).collect();
            stats::coefficient_of_variation(&inc)
        })
        .flatten();

    Some(AttributeFrame {
        frame_id: frame_id(&series.drive_id, window, &spec.id),
        drive_id: series.drive_id.clone(),
        window: *window,
        attribute: spec.id.clone(),
        name: spec.name.clone(),
        group: spec.group,
        ideal: spec.ideal,
        unit: spec.unit.clone(),
        concept: spec.concept.clone(),
        method: rules.method_tag(),
        summary: Summary::of(&level).expect("at least one observed value"),
        temporal: Temporal {
            slope: stats::ols_slope(&days, &obs),
            mann_kendall,
            change_points,
            spike_days,
            exposure,
            seasonality: stats::autocorrelation(&observed_daily, rules.seasonality_lag),
            burstiness,
        },
        quality,
        daily,
        status,
    })
}

fn workload_frame(series: &DriveSeries, window: &Window, rules: &RuleRepository, dq: &mut DataQualityFrame) -> Option<WorkloadFrame> {
    let cols: Vec<&String> = rules.workload.keys().filter(|c| series.columns.contains_key(*c)).collect();
    let tags: Option<Vec<Option<String>>> = series.workload_tag.as_ref().map(|t| {
        (0..window.len_days()).map(|d| series.index_of(window.day(d)).and_then(|i| t[i].clone())).collect()
    });
    if cols.is_empty() && tags.is_none() {
        return None;
    }
    let mut daily = BTreeMap::new();
    let mut any = vec![Obs::Missing; window.len_days()];
    for c in &cols {
        let cells = series.window_values(c, window).expect("column exists");
        let obs: Vec<Option<f64>> = cells
            .iter()
            .map(|(v, s)| if *s == Obs::Observed { *v } else { None })
            .collect();
        for (d, v) in obs.iter().enumerate() {
            if v.is_some() {
                any[d] = Obs::Observed;
            }
        }
        daily.insert(c.to_string(), obs);
    }
    let values = |c: &str| -> Vec<f64> { daily.get(c).map(|v: &Vec<Option<f64>>| v.iter().flatten().copied().collect()).unwrap_or_default() };
    let shares: Vec<f64> = values("read_share");
    let valid: Vec<f64> = shares.iter().copied().filter(|x| (0.0..=1.0).contains(x)).collect();
    if valid.len() < shares.len() {
        dq.sensor_flags.push(format!("read_share: {} values outside [0,1] ignored", shares.len() - valid.len()));
    }
    let mut category = None;
    if let Some(tags) = &tags {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tags.iter().flatten() {
            if WORKLOAD_CATEGORIES.contains(&t.as_str()) {
                *counts.entry(t.as_str()).or_default() += 1;
            } else {
                dq.notes.push(format!("workload_tag `{t}` is not a known category"));
            }
        }
        dq.notes.dedup();
        category = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(t, _)| t.to_string());
        for (d, t) in tags.iter().enumerate() {
            if t.is_some() {
                any[d] = Obs::Observed;
            }
        }
    }
    Some(WorkloadFrame {
        frame_id: frame_id(&series.drive_id, window, "workload"),
        drive_id: series.drive_id.clone(),
        window: *window,
        read_share: stats::median(&valid),
        avg_queue_depth: stats::mean(&values("avg_queue_depth")),
        burstiness: stats::coefficient_of_variation(&values("io_count")),
        category,
        units: cols.iter().map(|c| (c.to_string(), rules.workload[*c].unit.clone())).collect(),
        quality: Quality::from_status(&any),
        daily,
    })
}

fn env_frame(series: &DriveSeries, window: &Window, rules: &RuleRepository) -> Option<EnvFrame> {
    let mut factors = BTreeMap::new();
    for spec in &rules.environment {
        let Some(cells) = series.window_values(&spec.column, window) else { continue };
        let daily: Vec<Option<f64>> =
            cells.iter().map(|(v, s)| if *s == Obs::Missing { None } else { *v }).collect();
        let status: Vec<Obs> = cells.iter().map(|c| c.1).collect();
        let level: Vec<f64> = daily.iter().flatten().copied().collect();
        let Some(median) = stats::median(&level) else { continue };
        let mut excursions = Vec::new();
        if let Some(limit) = spec.excursion_above {
            let mut open: Option<Excursion> = None;
            for (d, (v, s)) in cells.iter().enumerate() {
                match (*s == Obs::Observed).then_some(*v).flatten().filter(|v| *v > limit) {
                    Some(v) => {
                        let e = open.get_or_insert(Excursion { start: d, end: d, peak: v });
                        e.end = d;
                        e.peak = e.peak.max(v);
                    }
                    None => excursions.extend(open.take()),
                }
            }
            excursions.extend(open);
        }
        factors.insert(
            spec.factor.clone(),
            EnvSummary {
                column: spec.column.clone(),
                concept: spec.concept.clone(),
                unit: spec.unit.clone(),
                median,
                p95: stats::quantile(&level, 0.95).expect("non-empty"),
                max: level.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                excursions,
                quality: Quality::from_status(&status),
                daily,
                status,
            },
        );
    }
    (!factors.is_empty()).then(|| EnvFrame {
        frame_id: frame_id(&series.drive_id, window, "env"),
        drive_id: series.drive_id.clone(),
        window: *window,
        factors,
    })
}

/// Frames for one (drive, window). The window may extend past the series; those days
/// count as missing. Pass an imputed series to get imputed values into level summaries.
pub fn emit_frames(series: &DriveSeries, window: &Window, rules: &RuleRepository) -> Result<FrameSet, TelemetryError> {
    let span = series.span();
    if window.end < span.start || window.start > span.end {
        return Err(TelemetryError::Window(format!(
            "window {window} does not overlap the series of {} ({span})",
            series.drive_id
        )));
    }
    let n = window.len_days();
    let mut dq = DataQualityFrame {
        frame_id: frame_id(&series.drive_id, window, "quality"),
        drive_id: series.drive_id.clone(),
        window: *window,
        coverage: BTreeMap::new(),
        attributes: BTreeMap::new(),
        missing_days: 0,
        absent_rows: 0,
        imputed_values: 0,
        sensor_flags: Vec::new(),
        validity_flags: Vec::new(),
        notes: Vec::new(),
    };
    let mut attributes = Vec::new();
    let mut smart_any = vec![false; n];
    let mut missing_any = vec![false; n];
    for spec in &rules.attributes {
        let Some(cells) = series.window_values(&spec.id, window) else { continue };
        let status: Vec<Obs> = cells.iter().map(|c| c.1).collect();
        for (d, s) in status.iter().enumerate() {
            smart_any[d] |= *s == Obs::Observed;
            missing_any[d] |= *s == Obs::Missing;
        }
        dq.attributes.insert(spec.id.clone(), Quality::from_status(&status));
        attributes.extend(attribute_frame(series, window, spec, rules, &mut dq.notes));
    }
    let workload = workload_frame(series, window, rules, &mut dq);
    let env = env_frame(series, window, rules);

    let frac = |v: &[bool]| v.iter().filter(|b| **b).count() as f64 / n as f64;
    if !dq.attributes.is_empty() {
        dq.coverage.insert("smart".into(), frac(&smart_any));
    }
    if let Some(w) = &workload {
        dq.coverage.insert("workload".into(), w.quality.coverage);
    }
    if let Some(e) = &env {
        let mut any = vec![false; n];
        for f in e.factors.values() {
            for (d, v) in f.daily.iter().enumerate() {
                any[d] |= v.is_some();
            }
        }
        dq.coverage.insert("environment".into(), frac(&any));
    }
    dq.missing_days = missing_any.iter().filter(|b| **b).count();
    for d in 0..n {
        let Some(i) = series.index_of(window.day(d)) else {
            dq.absent_rows += 1;
            continue;
        };
        if !series.present[i] {
            dq.absent_rows += 1;
        }
        for flag in &series.flags[i] {
            let entry = format!("day {d}: {flag}");
            if flag.starts_with("sensor-check:") {
                dq.sensor_flags.push(entry);
            } else {
                dq.validity_flags.push(entry);
            }
        }
        for col in series.columns.values() {
            if col.status[i] == Obs::Imputed {
                dq.imputed_values += 1;
            }
        }
    }
    if dq.imputed_values > 0 {
        dq.notes.push(format!(
            "{} values imputed by {:?} interpolation across gaps of at most {} days",
            dq.imputed_values, rules.imputation.method, rules.imputation.max_gap
        ));
    }
    Ok(FrameSet {
        drive_id: series.drive_id.clone(),
        model: series.model.clone(),
        window: *window,
        rules_version: rules.version,
        attributes,
        workload,
        env,
        quality: dq,
    })
}
