//! Curated rule repository: attribute catalog, window length, imputation, coverage,
//! change-point and episode parameters. Versioned; frames record the version they used.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::ChangePointParams;
use super::TelemetryError;

const BUILTIN: &str = include_str!("../../data/rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Media,
    Interface,
    Usage,
    Environment,
    Workload,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Media => "media",
            Group::Interface => "interface",
            Group::Usage => "usage",
            Group::Environment => "environment",
            Group::Workload => "workload",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ideal {
    Low,
    High,
    Monitor,
}

impl Ideal {
    pub fn as_str(self) -> &'static str {
        match self {
            Ideal::Low => "Low",
            Ideal::High => "High",
            Ideal::Monitor => "Monitor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdDirection {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub direction: ThresholdDirection,
}

impl Threshold {
    pub fn exceeded(&self, x: f64) -> bool {
        match self.direction {
            ThresholdDirection::Above => x > self.value,
            ThresholdDirection::Below => x < self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub id: String,
    pub name: String,
    pub group: Group,
    pub ideal: Ideal,
    pub unit: String,
    /// Taxonomy concept the attribute measures.
    pub concept: String,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
    #[serde(default)]
    pub change_points: bool,
    /// Cumulative counter that must never decrease.
    #[serde(default)]
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationMethod {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputationPolicy {
    pub max_gap: usize,
    pub method: ImputationMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePolicy {
    pub min_keep: f64,
    pub full_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRules {
    pub min_days: usize,
    pub min_correlation: f64,
    pub min_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub column: String,
    pub factor: String,
    pub concept: String,
    pub unit: String,
    #[serde(default)]
    pub excursion_above: Option<f64>,
    /// Values outside the closed range are sensor faults and treated as missing.
    #[serde(default)]
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRepository {
    pub version: u32,
    pub window_days: usize,
    pub imputation: ImputationPolicy,
    pub coverage: CoveragePolicy,
    pub change_points: ChangePointParams,
    pub spike_mad_k: f64,
    pub seasonality_lag: usize,
    pub episodes: EpisodeRules,
    pub attributes: Vec<AttributeSpec>,
    pub workload: BTreeMap<String, ColumnSpec>,
    pub environment: Vec<EnvSpec>,
}

pub const WORKLOAD_COLUMNS: [&str; 3] = ["read_share", "avg_queue_depth", "io_count"];

impl RuleRepository {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin rules are well-formed")
    }

    pub fn from_json(text: &str) -> Result<Self, TelemetryError> {
        let r: RuleRepository = serde_json::from_str(text).map_err(|e| TelemetryError::Rules(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }

    fn validate(&self) -> Result<(), TelemetryError> {
        let bad = |m: String| Err(TelemetryError::Rules(m));
        if self.window_days == 0 {
            return bad("window_days must be positive".into());
        }
        let c = self.coverage;
        if !(0.0..=1.0).contains(&c.min_keep) || !(c.min_keep..=1.0).contains(&c.full_weight) {
            return bad(format!("coverage policy needs 0 <= min_keep <= full_weight <= 1, got {c:?}"));
        }
        if self.change_points.min_segment == 0 {
            return bad("change_points.min_segment must be positive".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.attributes {
            if !a.id.starts_with("r_") || !seen.insert(a.id.as_str()) {
                return bad(format!("attribute id `{}` must be a unique r_* column", a.id));
            }
        }
        for w in self.workload.keys() {
            if !WORKLOAD_COLUMNS.contains(&w.as_str()) {
                return bad(format!("unknown workload column `{w}`"));
            }
        }
        for e in &self.environment {
            if e.unit.is_empty() {
                return bad(format!("environment column `{}` needs a unit", e.column));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, id: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.id == id)
    }

    pub fn env(&self, column: &str) -> Option<&EnvSpec> {
        self.environment.iter().find(|e| e.column == column)
    }

    /// Every numeric column the loader keeps.
    pub fn known_numeric(&self, column: &str) -> bool {
        self.attribute(column).is_some() || self.workload.contains_key(column) || self.env(column).is_some()
    }

    /// Weight for a coverage value, `None` when the window is dropped. Linear between
    /// `min_keep` and `full_weight`.
    pub fn coverage_weight(&self, coverage: f64) -> Option<f64> {
        let c = self.coverage;
        if coverage < c.min_keep {
            None
        } else if coverage >= c.full_weight || c.full_weight <= c.min_keep {
            Some(1.0)
        } else {
            Some(((coverage - c.min_keep) / (c.full_weight - c.min_keep)).clamp(0.0, 1.0))
        }
    }

    pub fn method_tag(&self) -> String {
        format!(
            "rules-v{}:median,p95-linear,ols-slope,mann-kendall-tie-corrected,binseg-sse(min_segment={},penalty={}σ²ln n),spike>median+{}·MAD",
            self.version, self.change_points.min_segment, self.change_points.penalty_factor, self.spike_mad_k
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog() {
        let r = RuleRepository::builtin();
        assert_eq!(r.attributes.len(), 15);
        assert_eq!(r.attribute("r_187").unwrap().ideal, Ideal::Low);
        assert!(r.attribute("r_241").unwrap().monotone);
        assert_eq!(RuleRepository::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn coverage_weights() {
        let r = RuleRepository::builtin();
        assert_eq!(r.coverage_weight(0.5), None);
        assert_eq!(r.coverage_weight(1.0), Some(1.0));
        assert!((r.coverage_weight(0.7).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_policy() {
        let mut r = RuleRepository::builtin();
        r.coverage.min_keep = 0.9;
        assert!(RuleRepository::from_json(&r.to_json()).is_err());
    }
}
