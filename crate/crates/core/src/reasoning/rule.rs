//! The template backend's prediction rule, evaluable both on a data subgraph and on the
//! fields of a rendered prompt so that the two can be checked against each other.

use serde::{Deserialize, Serialize};

use crate::datakg::DataSubgraph;
use crate::graph::NodeId;

/// Significance level for the r_187 trend test.
pub const TREND_ALPHA: f64 = 0.05;
/// Minimum r_5 days above threshold that flag a failure.
pub const EXPOSURE_MIN_DAYS: f64 = 3.0;
/// Growth horizon of the inverse-slope TTF heuristic, in counter units.
pub const TTF_HORIZON: f64 = 30.0;
pub const TTF_MIN_DAYS: f64 = 1.0;
pub const TTF_MAX_DAYS: f64 = 365.0;

/// Attributes whose trends feed the rule.
pub const RULE_ATTRIBUTES: [&str; 2] = ["r_187", "r_5"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskSignals {
    pub r187_mk_s: Option<f64>,
    pub r187_mk_p: Option<f64>,
    pub r5_exposure_days: Option<f64>,
    /// OLS slopes (units/day) of r_187 and r_5 where available.
    pub slopes: Vec<f64>,
}

impl RiskSignals {
    pub fn fail_flag(&self) -> bool {
        let trend = matches!((self.r187_mk_s, self.r187_mk_p), (Some(s), Some(p)) if s > 0.0 && p < TREND_ALPHA);
        let exposure = self.r5_exposure_days.is_some_and(|d| d >= EXPOSURE_MIN_DAYS);
        trend || exposure
    }

    /// Days until the fastest growing rule attribute gains `TTF_HORIZON` units, clipped
    /// to [1, 365]; 365 without positive growth. `None` when the rule does not fire.
    pub fn ttf_days(&self) -> Option<f64> {
        if !self.fail_flag() {
            return None;
        }
        let fastest = self.slopes.iter().copied().filter(|s| *s > 0.0).fold(0.0, f64::max);
        if fastest <= 0.0 {
            return Some(TTF_MAX_DAYS);
        }
        Some((TTF_HORIZON / fastest).clamp(TTF_MIN_DAYS, TTF_MAX_DAYS))
    }

    /// Cohort ordering key: firing windows first, then by fastest growth.
    pub fn score(&self) -> f64 {
        let growth = self.slopes.iter().copied().fold(0.0, f64::max);
        let exposure = self.r5_exposure_days.unwrap_or(0.0);
        if self.fail_flag() {
            1e6 + growth + exposure
        } else {
            growth + exposure
        }
    }

    pub fn from_subgraph(sg: &DataSubgraph) -> Self {
        let g = &sg.graph;
        let class = NodeId::term("AttributeFrame");
        let mut out = RiskSignals::default();
        let mut frames: Vec<&NodeId> = g.nodes_of_class(&class).collect();
        frames.sort_by_key(|n| g.text(n, "attribute").map(attribute_order));
        for f in frames {
            match g.text(f, "attribute") {
                Some("r_187") => {
                    out.r187_mk_s = g.number(f, "mkS");
                    out.r187_mk_p = g.number(f, "mkP");
                    out.slopes.extend(g.number(f, "slope"));
                }
                Some("r_5") => {
                    out.r5_exposure_days = g.number(f, "exposureDays");
                    out.slopes.extend(g.number(f, "slope"));
                }
                _ => {}
            }
        }
        out
    }
}

/// Orders `r_<n>` ids numerically; anything else sorts last by name.
pub fn attribute_order(attr: &str) -> (u64, String) {
    let n = attr.strip_prefix("r_").and_then(|d| d.parse().ok()).unwrap_or(u64::MAX);
    (n, attr.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_branches() {
        let none = RiskSignals::default();
        assert!(!none.fail_flag() && none.ttf_days().is_none());
        let trend = RiskSignals { r187_mk_s: Some(40.0), r187_mk_p: Some(0.01), slopes: vec![0.5], ..Default::default() };
        assert!(trend.fail_flag());
        assert_eq!(trend.ttf_days(), Some(60.0));
        let falling = RiskSignals { r187_mk_s: Some(-40.0), r187_mk_p: Some(0.01), ..Default::default() };
        assert!(!falling.fail_flag());
        let exposed = RiskSignals { r5_exposure_days: Some(3.0), slopes: vec![100.0], ..Default::default() };
        assert_eq!(exposed.ttf_days(), Some(1.0));
        let flat = RiskSignals { r5_exposure_days: Some(5.0), slopes: vec![0.0], ..Default::default() };
        assert_eq!(flat.ttf_days(), Some(365.0));
    }
}
