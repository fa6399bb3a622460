//! Mitigation follow-ups: one task per accepted mitigation, due a fixed horizon after
//! acceptance. A due task compares the expected metric's observed values in the
//! post-window (the days after acceptance up to the due date) with the analyzed window.

use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use ssdkg_core::datakg::MitigationAction;
use ssdkg_core::graph::{stable_id, Direction};
use ssdkg_core::telemetry::stats::{mad, median};
use ssdkg_core::telemetry::{DriveSeries, Ideal, Obs, RuleRepository, Window};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpResult {
    pub column: String,
    pub pre_window: Window,
    pub post_window: Window,
    pub pre_median: f64,
    pub pre_mad: f64,
    pub post_median: f64,
    /// post − pre
    pub change: f64,
    pub improved: bool,
    pub evaluated_on: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FollowUpStatus {
    Pending,
    Done { result: FollowUpResult },
    /// Retried on the next run.
    Blocked { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpTask {
    pub task_id: String,
    pub window_tag: String,
    pub action_id: String,
    pub accepted_at: DateTime<Utc>,
    pub due: NaiveDate,
    pub expected_metric: String,
    pub expected_direction: Direction,
    #[serde(flatten)]
    pub status: FollowUpStatus,
    pub attempts: u32,
}

impl FollowUpTask {
    pub fn is_open(&self) -> bool {
        !matches!(self.status, FollowUpStatus::Done { .. })
    }

    pub fn post_window(&self) -> Window {
        Window::new(self.accepted_at.date_naive() + Duration::days(1), self.due).expect("due follows acceptance")
    }
}

/// The telemetry column measuring `metric` (attribute id, taxonomy concept, environment
/// factor or column name) and the sign of a desirable change: +1 for attributes whose
/// ideal is High, −1 otherwise.
pub fn metric_column(rules: &RuleRepository, metric: &str) -> Option<(String, f64)> {
    let eq = |a: &str| a.eq_ignore_ascii_case(metric);
    if let Some(a) = rules.attributes.iter().find(|a| eq(&a.id) || eq(&a.name)).or_else(|| rules.attributes.iter().find(|a| eq(&a.concept))) {
        return Some((a.id.clone(), if a.ideal == Ideal::High { 1.0 } else { -1.0 }));
    }
    if let Some(e) = rules.environment.iter().find(|e| eq(&e.column) || eq(&e.factor) || eq(&e.concept)) {
        return Some((e.column.clone(), -1.0));
    }
    rules.workload.keys().find(|k| eq(k)).map(|k| (k.clone(), -1.0))
}

fn observed(series: &DriveSeries, column: &str, window: &Window) -> Vec<f64> {
    series
        .window_values(column, window)
        .unwrap_or_default()
        .into_iter()
        .filter(|(_, st)| *st == Obs::Observed)
        .filter_map(|(v, _)| v)
        .collect()
}

/// Improvement iff the post-window median moved in the expected direction by at least
/// one pre-window MAD (and by a positive amount when the MAD is zero). A neutral
/// expectation holds iff the median moved by at most one MAD.
pub fn assess(
    task: &FollowUpTask,
    series: Option<&DriveSeries>,
    pre_window: &Window,
    rules: &RuleRepository,
    today: NaiveDate,
) -> FollowUpStatus {
    let blocked = |reason: String| FollowUpStatus::Blocked { reason };
    let Some((column, desirable)) = metric_column(rules, &task.expected_metric) else {
        return blocked(format!("no telemetry column measures {}", task.expected_metric));
    };
    let Some(series) = series else { return blocked(format!("no telemetry for drive of {}", task.window_tag)) };
    let post_window = task.post_window();
    let post = observed(series, &column, &post_window);
    let days = post_window.len_days();
    if (post.len() as f64) < rules.coverage.min_keep * days as f64 || post.is_empty() {
        return blocked(format!("post-window telemetry absent: {} of {days} days of {column} observed", post.len()));
    }
    let pre = observed(series, &column, pre_window);
    let (Some(pre_median), Some(pre_mad)) = (median(&pre), mad(&pre)) else {
        return blocked(format!("no observed {column} values in {pre_window}"));
    };
    let post_median = median(&post).expect("non-empty");
    let change = post_median - pre_median;
    let improved = match task.expected_direction {
        Direction::Neutral => change.abs() <= pre_mad,
        d => {
            // Improves means a desirable move; degrades the opposite.
            let moved = change * desirable * if d == Direction::Improves { 1.0 } else { -1.0 };
            moved > 0.0 && moved >= pre_mad
        }
    };
    FollowUpStatus::Done {
        result: FollowUpResult {
            column,
            pre_window: *pre_window,
            post_window,
            pre_median,
            pre_mad,
            post_median,
            change,
            improved,
            evaluated_on: today,
        },
    }
}

/// Tasks persisted as one JSON document, rewritten atomically under a lock.
#[derive(Debug)]
pub struct FollowUpStore {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FollowUpStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), lock: Mutex::new(()) }
    }

    fn read(&self) -> Result<Vec<FollowUpTask>> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&self.path).map_err(AppError::io(&self.path))?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Corrupt { path: self.path.display().to_string(), message: e.to_string() })
    }

    fn write(&self, tasks: &[FollowUpTask]) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(AppError::io(dir))?;
        }
        let tmp = self.path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(tasks).expect("tasks serialize")).map_err(AppError::io(&tmp))?;
        fs::rename(&tmp, &self.path).map_err(AppError::io(&self.path))
    }

    pub fn list(&self) -> Result<Vec<FollowUpTask>> {
        let _g = self.lock.lock().expect("follow-up lock poisoned");
        self.read()
    }

    /// Returns the task for (window, action), creating it when absent; the flag is true
    /// when created.
    pub fn schedule(&self, action: &MitigationAction, horizon_days: i64) -> Result<(FollowUpTask, bool)> {
        let _g = self.lock.lock().expect("follow-up lock poisoned");
        let mut tasks = self.read()?;
        if let Some(t) = tasks.iter().find(|t| t.window_tag == action.window_tag && t.action_id == action.action_id) {
            return Ok((t.clone(), false));
        }
        let task = FollowUpTask {
            task_id: stable_id(&[&action.window_tag, &action.action_id]),
            window_tag: action.window_tag.clone(),
            action_id: action.action_id.clone(),
            accepted_at: action.accepted_at,
            due: action.accepted_at.date_naive() + Duration::days(horizon_days.max(1)),
            expected_metric: action.expected_metric.clone(),
            expected_direction: action.expected_direction,
            status: FollowUpStatus::Pending,
            attempts: 0,
        };
        tasks.push(task.clone());
        self.write(&tasks)?;
        Ok((task, true))
    }

    /// Runs every open task due on or before `today` through `check` and persists the
    /// outcome. Done tasks are never run again.
    pub fn run_due(
        &self,
        today: NaiveDate,
        mut check: impl FnMut(&FollowUpTask) -> FollowUpStatus,
    ) -> Result<Vec<FollowUpTask>> {
        let _g = self.lock.lock().expect("follow-up lock poisoned");
        let mut tasks = self.read()?;
        let mut ran = Vec::new();
        for t in tasks.iter_mut().filter(|t| t.is_open() && t.due <= today) {
            t.status = check(t);
            t.attempts += 1;
            ran.push(t.clone());
        }
        if !ran.is_empty() {
            self.write(&tasks)?;
        }
        Ok(ran)
    }
}
