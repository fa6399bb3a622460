//! Grounded window summaries. Every quantity a summary sentence cites is mirrored by a
//! sidecar claim naming the node and property it was read from.

use serde::{Deserialize, Serialize};

use super::rule::{attribute_order, RiskSignals};
use super::{fmt_num, ReasoningError};
use crate::datakg::{property_unit, DataSubgraph};
use crate::graph::{KnowledgeGraph, NodeId};
use crate::telemetry::rules::ThresholdDirection;
use crate::telemetry::{stats, FrameSet};

/// Significance level used to label a trend as increasing or decreasing.
pub const TREND_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarClaim {
    pub claim_id: String,
    pub text: String,
    /// Display form of the node the quantity is stored on.
    pub node: String,
    pub property: String,
    pub quantity: f64,
    pub unit: String,
    /// Window tag.
    pub window: String,
}

impl SidecarClaim {
    /// `id|node|property|quantity|unit|window|text`
    pub fn to_line(&self) -> String {
        [
            self.claim_id.as_str(),
            &self.node,
            &self.property,
            &fmt_num(self.quantity),
            &self.unit,
            &self.window,
            &self.text.replace('|', "/"),
        ]
        .join("|")
    }

    pub fn from_line(line: &str) -> Option<Self> {
        let parts: Vec<&str> = line.splitn(7, '|').map(str::trim).collect();
        let [id, node, property, quantity, unit, window, text] = parts.as_slice() else { return None };
        Some(Self {
            claim_id: id.to_string(),
            text: text.to_string(),
            node: node.to_string(),
            property: property.to_string(),
            quantity: quantity.parse().ok()?,
            unit: unit.to_string(),
            window: window.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedSummary {
    pub tag: String,
    pub drive_id: String,
    pub window: String,
    /// `- key: k=v, ...` lines for the prompt context section.
    pub context: Vec<String>,
    pub sentences: Vec<String>,
    pub text: String,
    pub sidecar: Vec<SidecarClaim>,
    pub risk: RiskSignals,
    /// True when the context carries raw daily values instead of frames.
    pub raw: bool,
}

pub fn trend_label(s: Option<f64>, p: Option<f64>) -> &'static str {
    match (s, p) {
        (Some(s), Some(p)) if p < TREND_ALPHA && s > 0.0 => "increasing",
        (Some(s), Some(p)) if p < TREND_ALPHA && s < 0.0 => "decreasing",
        (Some(_), Some(_)) => "stable",
        _ => "n/a",
    }
}

struct Builder<'a> {
    g: &'a KnowledgeGraph,
    tag: String,
    sidecar: Vec<SidecarClaim>,
}

impl Builder<'_> {
    /// Records a claim on `node.property` and returns `(quantity, unit)` for the sentence.
    fn claim(&mut self, node: &NodeId, property: &str, subject: &str, label: &str) -> Option<(String, String)> {
        let q = self.g.number(node, property)?;
        let unit = property_unit(self.g, node, property).unwrap_or_default();
        let shown = fmt_num(q);
        self.sidecar.push(SidecarClaim {
            claim_id: format!("c{}", self.sidecar.len() + 1),
            text: format!("{subject} {label} is {shown} {unit} in {}", self.tag),
            node: node.to_string(),
            property: property.to_string(),
            quantity: q,
            unit: unit.clone(),
            window: self.tag.clone(),
        });
        Some((shown, unit))
    }
}

fn first_object<'a>(g: &'a KnowledgeGraph, s: &'a NodeId, rel: &str) -> Option<&'a NodeId> {
    let r = NodeId::term(rel);
    g.outgoing(s).find(|t| t.relation == r).map(|t| &t.object)
}

fn label_of(g: &KnowledgeGraph, s: &NodeId, rel: &str) -> String {
    first_object(g, s, rel).and_then(|o| g.text(o, "label")).unwrap_or("n/a").to_string()
}

fn num(g: &KnowledgeGraph, n: &NodeId, p: &str) -> String {
    g.number(n, p).map(fmt_num).unwrap_or_else(|| "n/a".to_string())
}

fn nodes_of<'a>(g: &'a KnowledgeGraph, class: &str) -> Vec<&'a NodeId> {
    let c = NodeId::term(class);
    g.nodes().filter(|(_, n)| n.class.as_ref() == Some(&c)).map(|(id, _)| id).collect()
}

pub fn summarize_subgraph(sg: &DataSubgraph) -> Result<GroundedSummary, ReasoningError> {
    let g = &sg.graph;
    let tag = sg.tag.to_string();
    let mut frames = nodes_of(g, "AttributeFrame");
    if g.is_empty() || frames.is_empty() {
        return Err(ReasoningError::EmptySubgraph(format!("{tag} has no attribute frames")));
    }
    frames.sort_by_key(|n| g.text(n, "attribute").map(attribute_order));
    let window = sg.tag.window.to_string();
    let mut b = Builder { g, tag: tag.clone(), sidecar: Vec::new() };
    let mut context = Vec::new();
    let mut sentences = Vec::new();

    for f in frames {
        let attr = g.text(f, "attribute").unwrap_or("?").to_string();
        let name = g.text(f, "name").unwrap_or("?").to_string();
        let unit = g.text(f, "unit").unwrap_or("").to_string();
        let (s, p) = (g.number(f, "mkS"), g.number(f, "mkP"));
        let trend = trend_label(s, p);
        let cps = g.text(f, "changePoints").unwrap_or("none").to_string();
        let spikes = g.number(f, "spikeCount").unwrap_or(0.0);
        let exposure = g.number(f, "exposureDays");
        let threshold = g.number(f, "exposureThreshold").map(|v| {
            format!("{} {}", g.text(f, "exposureDirection").unwrap_or("above"), fmt_num(v))
        });
        let coverage = format!("{}/{}", num(g, f, "observed"), num(g, f, "windowDays"));

        let mut fields = vec![format!("trend={trend}")];
        for (k, prop) in [("mk_s", "mkS"), ("mk_p", "mkP"), ("slope", "slope")] {
            if g.number(f, prop).is_some() {
                fields.push(format!("{k}={}", num(g, f, prop)));
            }
        }
        fields.push(format!("change_points={cps}"));
        fields.push(format!("spikes={}", fmt_num(spikes)));
        if let (Some(e), Some(t)) = (exposure, &threshold) {
            fields.push(format!("exposure_days={}", fmt_num(e)));
            fields.push(format!("threshold={t}"));
        }
        for (k, prop) in [("median", "median"), ("p95", "p95"), ("last", "last"), ("delta", "delta")] {
            fields.push(format!("{k}={}", num(g, f, prop)));
        }
        for prop in ["burstiness", "seasonality"] {
            if g.number(f, prop).is_some() {
                fields.push(format!("{prop}={}", num(g, f, prop)));
            }
        }
        fields.push(format!("unit={unit}"));
        fields.push(format!("ideal={}", label_of(g, f, "hasIdeal")));
        fields.push(format!("group={}", label_of(g, f, "belongsToGroup")));
        fields.push(format!("coverage={coverage}"));
        fields.push(format!("node={f}"));
        context.push(format!("- {attr} {name}: {}", fields.join(", ")));

        let salient = matches!(trend, "increasing" | "decreasing")
            || exposure.is_some_and(|e| e > 0.0)
            || cps != "none"
            || spikes > 0.0;
        if !salient {
            continue;
        }
        let mut clauses = Vec::new();
        if let Some((p_shown, _)) = b.claim(f, "mkP", &attr, "Mann-Kendall p-value") {
            let mut c = format!("{trend} trend (Mann-Kendall S={}, p={p_shown})", num(g, f, "mkS"));
            if let Some((slope, u)) = b.claim(f, "slope", &attr, "least-squares slope") {
                c.push_str(&format!(", slope {slope} {u}"));
            }
            clauses.push(c);
        }
        if let Some((last, u)) = b.claim(f, "last", &attr, "last observed value") {
            clauses.push(format!("last value {last} {u} where the ideal is {}", label_of(g, f, "hasIdeal")));
        }
        if let Some(t) = &threshold {
            if let Some((e, _)) = b.claim(f, "exposureDays", &attr, "days beyond threshold") {
                clauses.push(format!("{e} days {t} {unit}"));
            }
        }
        if cps != "none" {
            clauses.push(format!("change points at day offsets {cps}"));
        }
        if spikes > 0.0 {
            clauses.push(format!("{} spike days", fmt_num(spikes)));
        }
        if let Some((obs, _)) = b.claim(f, "observed", &attr, "observed day count") {
            clauses.push(format!("coverage {obs}/{} days", num(g, f, "windowDays")));
        }
        sentences.push(format!("{attr} ({name}) over {window}: {}.", clauses.join("; ")));
    }

    for w in nodes_of(g, "WorkloadFrame") {
        let mut fields = Vec::new();
        if let Some(c) = g.text(w, "category") {
            fields.push(format!("category={c}"));
        }
        for (k, prop) in [("read_share", "readShare"), ("avg_queue_depth", "avgQueueDepth"), ("burstiness", "burstiness")] {
            fields.push(format!("{k}={}", num(g, w, prop)));
        }
        fields.push(format!("coverage={}", num(g, w, "coverage")));
        fields.push(format!("node={w}"));
        context.push(format!("- Workload: {}", fields.join(", ")));
    }
    for e in nodes_of(g, "EnvFrame") {
        let node = g.node(e).expect("listed node exists");
        let mut factors: Vec<String> = node
            .properties
            .keys()
            .filter_map(|p| p.term_name()?.strip_suffix("Concept").map(str::to_string))
            .collect();
        factors.sort();
        for fct in factors {
            let fields = [
                format!("concept={}", g.text(e, &format!("{fct}Concept")).unwrap_or("?")),
                format!("median={}", num(g, e, &format!("{fct}Median"))),
                format!("p95={}", num(g, e, &format!("{fct}P95"))),
                format!("max={}", num(g, e, &format!("{fct}Max"))),
                format!("excursions={}", num(g, e, &format!("{fct}Excursions"))),
                format!("unit={}", g.text(e, &format!("{fct}Unit")).unwrap_or("")),
                format!("node={e}"),
            ];
            context.push(format!("- Environment {fct}: {}", fields.join(", ")));
        }
    }
    let mut episodes = nodes_of(g, "Episode");
    episodes.sort_by_key(|n| (g.number(n, "startDay").map(|d| d as i64), n.to_string()));
    for ep in episodes {
        let mut fields = vec![
            format!("signals={}", g.text(ep, "signals").unwrap_or("")),
            format!("start_day={}", num(g, ep, "startDay")),
        ];
        for (k, prop) in [("pre_level", "preLevel"), ("post_level", "postLevel"), ("correlation", "correlation"), ("pairs", "pairs")] {
            if g.number(ep, prop).is_some() {
                fields.push(format!("{k}={}", num(g, ep, prop)));
            }
        }
        context.push(format!("- Episode {}: {}", g.text(ep, "kind").unwrap_or("?"), fields.join(", ")));
    }
    for dq in nodes_of(g, "DataQuality") {
        let notes: Vec<&str> = g
            .node(dq)
            .and_then(|n| n.properties.get(&NodeId::term("note")))
            .map(|ls| ls.iter().filter_map(|l| l.as_str()).collect())
            .unwrap_or_default();
        let notes_text = if notes.is_empty() { "none".to_string() } else { notes.join("; ").replace(", ", "; ") };
        context.push(format!(
            "- Data quality: missing_days={}, imputed_values={}, absent_rows={}, notes={notes_text}",
            num(g, dq, "missingDays"),
            num(g, dq, "imputedValues"),
            num(g, dq, "absentRows"),
        ));
        if g.number(dq, "missingDays").is_some_and(|m| m > 0.0) {
            let (m, _) = b.claim(dq, "missingDays", "data quality", "missing day count").expect("checked");
            let imputed = b.claim(dq, "imputedValues", "data quality", "imputed value count").map(|(v, _)| v);
            sentences.push(format!(
                "Data quality over {window}: {m} missing days and {} imputed values; statistics use observed days only.",
                imputed.unwrap_or_else(|| "0".into())
            ));
        }
    }
    let mut mitigations = nodes_of(g, "MitigationAction");
    mitigations.sort();
    for m in mitigations {
        context.push(format!(
            "- Mitigation: action={}, expected_metric={}, expected_direction={}, accepted_at={}",
            g.text(m, "description").unwrap_or("?").replace(", ", "; "),
            g.text(m, "expectedMetric").unwrap_or("?"),
            g.text(m, "expectedDirection").unwrap_or("?"),
            g.text(m, "acceptedAt").unwrap_or("?"),
        ));
    }

    let text = if sentences.is_empty() {
        format!("No salient changes in {tag}.")
    } else {
        sentences.join(" ")
    };
    Ok(GroundedSummary {
        tag,
        drive_id: sg.tag.drive_id.clone(),
        window,
        context,
        sentences,
        text,
        sidecar: b.sidecar,
        risk: RiskSignals::from_subgraph(sg),
        raw: false,
    })
}

/// Raw-logs context: observed daily values per attribute instead of frame statistics.
/// No sidecar claims are produced.
pub fn raw_log_context(frames: &FrameSet) -> GroundedSummary {
    let tag = format!("{}/{}", frames.drive_id, frames.window);
    let mut attrs: Vec<_> = frames.attributes.iter().collect();
    attrs.sort_by_key(|f| attribute_order(&f.attribute));
    let mut context = Vec::new();
    for f in attrs {
        let values: Vec<String> = f.observed_daily().iter().map(|v| v.map(fmt_num).unwrap_or_else(|| "NA".into())).collect();
        let mut fields = vec![format!("unit={}", f.unit)];
        if let Some(e) = f.temporal.exposure.first() {
            let dir = match e.threshold.direction {
                ThresholdDirection::Above => "above",
                ThresholdDirection::Below => "below",
            };
            fields.push(format!("threshold={dir} {}", fmt_num(e.threshold.value)));
        }
        fields.push(format!("values={}", values.join("|")));
        context.push(format!("- {} {} raw daily: {}", f.attribute, f.name, fields.join(", ")));
    }
    context.push(format!(
        "- Data quality: missing_days={}, imputed_values={}, absent_rows={}, notes=raw values; NA marks missing days",
        frames.quality.missing_days, frames.quality.imputed_values, frames.quality.absent_rows
    ));
    let risk = risk_from_raw(&context);
    GroundedSummary {
        tag: tag.clone(),
        drive_id: frames.drive_id.clone(),
        window: frames.window.to_string(),
        context,
        sentences: Vec::new(),
        text: format!("Raw daily telemetry for {tag}."),
        sidecar: Vec::new(),
        risk,
        raw: true,
    }
}

/// Parses `key=value` fields of a context line after the first `": "`.
pub fn context_fields(line: &str) -> (String, Vec<(String, String)>) {
    let body = line.trim_start_matches("- ");
    let (head, rest) = body.split_once(": ").unwrap_or((body, ""));
    let fields = rest
        .split(", ")
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    (head.to_string(), fields)
}

fn parse_threshold(t: &str) -> Option<(bool, f64)> {
    let (dir, v) = t.split_once(' ')?;
    Some((dir == "above", v.parse().ok()?))
}

/// Rule inputs recomputed from raw-daily context lines.
pub fn risk_from_raw(lines: &[String]) -> RiskSignals {
    let mut out = RiskSignals::default();
    for line in lines {
        let (head, fields) = context_fields(line);
        let attr = head.split_whitespace().next().unwrap_or("");
        if !super::rule::RULE_ATTRIBUTES.contains(&attr) {
            continue;
        }
        let get = |k: &str| fields.iter().find(|(fk, _)| fk == k).map(|(_, v)| v.as_str());
        let Some(values) = get("values") else { continue };
        let (days, obs): (Vec<f64>, Vec<f64>) = values
            .split('|')
            .enumerate()
            .filter_map(|(d, v)| v.parse::<f64>().ok().map(|v| (d as f64, v)))
            .unzip();
        let slope = stats::ols_slope(&days, &obs);
        match attr {
            "r_187" => {
                if let Ok(mk) = stats::mann_kendall(&obs) {
                    out.r187_mk_s = Some(mk.s as f64);
                    out.r187_mk_p = Some(mk.p);
                }
            }
            _ => {
                out.r5_exposure_days = get("threshold").and_then(parse_threshold).map(|(above, t)| {
                    obs.iter().filter(|v| if above { **v > t } else { **v < t }).count() as f64
                });
            }
        }
        out.slopes.extend(slope);
    }
    out
}
