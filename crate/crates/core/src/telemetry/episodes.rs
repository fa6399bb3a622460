//! Multi-day episodes: regime shifts after a change point, and observed-day
//! associations between a SMART attribute and a workload or environment signal.

use serde::{Deserialize, Serialize};

use super::frames::{frame_id, FrameSet};
use super::rules::RuleRepository;
use super::stats;
use super::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeKind {
    RegimeShift,
    CrossSourceAssociation,
}

impl EpisodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeKind::RegimeShift => "regime-shift",
            EpisodeKind::CrossSourceAssociation => "cross-source-association",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub kind: EpisodeKind,
    pub drive_id: String,
    pub window: Window,
    /// Frame ids in the same frame set.
    pub triggers: Vec<String>,
    /// Column names of the signals involved.
    pub signals: Vec<String>,
    pub start_day: usize,
    pub pre_level: Option<f64>,
    pub post_level: Option<f64>,
    pub correlation: Option<f64>,
    pub pairs: Option<usize>,
}

/// Observed values per window day for every context signal.
fn context_signals(frames: &FrameSet) -> Vec<(String, String, Vec<Option<f64>>)> {
    let mut out = Vec::new();
    if let Some(w) = &frames.workload {
        for (col, daily) in &w.daily {
            out.push((col.clone(), w.frame_id.clone(), daily.clone()));
        }
    }
    if let Some(e) = &frames.env {
        for f in e.factors.values() {
            out.push((f.column.clone(), e.frame_id.clone(), f.observed_daily()));
        }
    }
    out
}

pub fn detect_episodes(frames: &FrameSet, rules: &RuleRepository) -> Vec<Episode> {
    let ep = rules.episodes;
    let mut out = Vec::new();
    for f in &frames.attributes {
        let obs = f.observed_daily();
        let mut bounds = vec![0];
        bounds.extend(f.temporal.change_points.iter().copied());
        bounds.push(obs.len());
        for (k, &cp) in f.temporal.change_points.iter().enumerate() {
            let (pre_start, post_end) = (bounds[k], bounds[k + 2]);
            let pre: Vec<f64> = obs[pre_start..cp].iter().flatten().copied().collect();
            let post: Vec<f64> = obs[cp..post_end].iter().flatten().copied().collect();
            if post.len() < ep.min_days {
                continue;
            }
            out.push(Episode {
                episode_id: frame_id(&frames.drive_id, &frames.window, &format!("episode/regime/{}/{cp}", f.attribute)),
                kind: EpisodeKind::RegimeShift,
                drive_id: frames.drive_id.clone(),
                window: frames.window,
                triggers: vec![f.frame_id.clone()],
                signals: vec![f.attribute.clone()],
                start_day: cp,
                pre_level: stats::median(&pre),
                post_level: stats::median(&post),
                correlation: None,
                pairs: None,
            });
        }
    }
    let context = context_signals(frames);
    for f in &frames.attributes {
        let obs = f.observed_daily();
        for (col, ctx_frame, ctx) in &context {
            let (days, (xs, ys)): (Vec<usize>, (Vec<f64>, Vec<f64>)) = obs
                .iter()
                .zip(ctx)
                .enumerate()
                .filter_map(|(d, (a, b))| Some((d, ((*a)?, (*b)?))))
                .unzip();
            if xs.len() < ep.min_pairs {
                continue;
            }
            let Some(r) = stats::pearson(&xs, &ys) else { continue };
            if r.abs() < ep.min_correlation {
                continue;
            }
            out.push(Episode {
                episode_id: frame_id(&frames.drive_id, &frames.window, &format!("episode/assoc/{}/{col}", f.attribute)),
                kind: EpisodeKind::CrossSourceAssociation,
                drive_id: frames.drive_id.clone(),
                window: frames.window,
                triggers: vec![f.frame_id.clone(), ctx_frame.clone()],
                signals: vec![f.attribute.clone(), col.clone()],
                start_day: days[0],
                pre_level: None,
                post_level: None,
                correlation: Some(r),
                pairs: Some(xs.len()),
            });
        }
    }
    out
}
