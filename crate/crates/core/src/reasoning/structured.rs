//! The fenced key-value block every backend is instructed to emit:
//!
//! ```text
//! BEGIN_STRUCTURED
//! fail_flag=true
//! ttf_days=25
//! counterfactual=Temperature|-5|P99Latency|improves
//! recommendation=DataMigration|UncorrectableErrors|improves
//! claim=c1|data:frame/..|slope|0.5|count/day|Disk/1/2024-03-01..2024-03-30|r_187 slope ...
//! prediction=Disk/1/2024-03-01..2024-03-30|true|25
//! END_STRUCTURED
//! ```
//!
//! Unknown keys are ignored. List keys may repeat.

use serde::{Deserialize, Serialize};

use super::summary::SidecarClaim;
use super::{fmt_num, ReasoningError};
use crate::graph::Direction;

pub const BEGIN: &str = "BEGIN_STRUCTURED";
pub const END: &str = "END_STRUCTURED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub factor: String,
    pub delta: f64,
    pub metric: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: String,
    pub metric: String,
    pub direction: Direction,
}

/// Per-window decision inside a cohort response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub tag: String,
    pub fail_flag: bool,
    pub ttf_days: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuredBlock {
    pub fail_flag: Option<bool>,
    pub ttf_days: Option<f64>,
    pub tail_latency_ms: Option<f64>,
    pub fail_probability: Option<f64>,
    pub counterfactuals: Vec<Counterfactual>,
    pub recommendations: Vec<Recommendation>,
    pub claims: Vec<SidecarClaim>,
    pub predictions: Vec<WindowPrediction>,
}

fn invalid(msg: impl Into<String>) -> ReasoningError {
    ReasoningError::Validation(msg.into())
}

fn positive(key: &str, v: &str) -> Result<f64, ReasoningError> {
    let x: f64 = v.parse().map_err(|_| invalid(format!("{key}: `{v}` is not a number")))?;
    if !(x.is_finite() && x > 0.0) {
        return Err(invalid(format!("{key} must be positive, got {v}")));
    }
    Ok(x)
}

fn boolean(key: &str, v: &str) -> Result<bool, ReasoningError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn direction(key: &str, v: &str) -> Result<Direction, ReasoningError> {
    v.parse().map_err(|_| invalid(format!("{key}: unknown direction `{v}`")))
}

fn fields<const N: usize>(key: &str, v: &str) -> Result<[String; N], ReasoningError> {
    let parts: Vec<String> = v.split('|').map(|s| s.trim().to_string()).collect();
    parts.try_into().map_err(|p: Vec<String>| invalid(format!("{key} needs {N} `|`-separated fields, got {}", p.len())))
}

/// `Ok(None)` when the text has no block. Malformed entries and out-of-range values
/// are validation errors.
pub fn parse_structured_block(text: &str) -> Result<Option<StructuredBlock>, ReasoningError> {
    let Some(start) = text.find(BEGIN) else { return Ok(None) };
    let body = &text[start + BEGIN.len()..];
    let end = body.find(END).ok_or_else(|| invalid(format!("{BEGIN} without {END}")))?;
    let mut out = StructuredBlock::default();
    for line in body[..end].lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, v) = line.split_once('=').ok_or_else(|| invalid(format!("line `{line}` is not key=value")))?;
        let (key, v) = (key.trim(), v.trim());
        match key {
            "fail_flag" => out.fail_flag = Some(boolean(key, v)?),
            "ttf_days" => out.ttf_days = if v == "none" { None } else { Some(positive(key, v)?) },
            "tail_latency_ms" => out.tail_latency_ms = Some(positive(key, v)?),
            "fail_probability" => {
                let p: f64 = v.parse().map_err(|_| invalid(format!("{key}: `{v}` is not a number")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("{key} must lie in [0, 1], got {v}")));
                }
                out.fail_probability = Some(p);
            }
            "counterfactual" => {
                let [factor, delta, metric, dir] = fields::<4>(key, v)?;
                let delta: f64 = delta.parse().map_err(|_| invalid(format!("counterfactual delta `{delta}`")))?;
                out.counterfactuals.push(Counterfactual { factor, delta, metric, direction: direction(key, &dir)? });
            }
            "recommendation" => {
                let [action, metric, dir] = fields::<3>(key, v)?;
                out.recommendations.push(Recommendation { action, metric, direction: direction(key, &dir)? });
            }
            "claim" => {
                let c = SidecarClaim::from_line(v).ok_or_else(|| invalid(format!("malformed claim `{v}`")))?;
                out.claims.push(c);
            }
            "prediction" => {
                let [tag, fail, ttf] = fields::<3>(key, v)?;
                let ttf_days = if ttf == "none" { None } else { Some(positive("prediction ttf", &ttf)?) };
                out.predictions.push(WindowPrediction { tag, fail_flag: boolean(key, &fail)?, ttf_days });
            }
            _ => {}
        }
    }
    Ok(Some(out))
}

impl StructuredBlock {
    pub fn render(&self) -> String {
        let mut lines = vec![BEGIN.to_string()];
        if let Some(f) = self.fail_flag {
            lines.push(format!("fail_flag={f}"));
        }
        if self.fail_flag.is_some() {
            lines.push(format!("ttf_days={}", self.ttf_days.map(fmt_num).unwrap_or_else(|| "none".into())));
        }
        if let Some(l) = self.tail_latency_ms {
            lines.push(format!("tail_latency_ms={}", fmt_num(l)));
        }
        if let Some(p) = self.fail_probability {
            lines.push(format!("fail_probability={}", fmt_num(p)));
        }
        for c in &self.counterfactuals {
            lines.push(format!("counterfactual={}|{}|{}|{}", c.factor, fmt_num(c.delta), c.metric, c.direction.as_str()));
        }
        for r in &self.recommendations {
            lines.push(format!("recommendation={}|{}|{}", r.action, r.metric, r.direction.as_str()));
        }
        for c in &self.claims {
            lines.push(format!("claim={}", c.to_line()));
        }
        for p in &self.predictions {
            let ttf = p.ttf_days.map(fmt_num).unwrap_or_else(|| "none".into());
            lines.push(format!("prediction={}|{}|{ttf}", p.tag, p.fail_flag));
        }
        lines.push(END.to_string());
        lines.join("\n")
    }
}
