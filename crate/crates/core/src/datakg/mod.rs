//! Per-window data graphs built from telemetry frames, coverage gating and mitigation
//! actions.
//!
//! Node ids are deterministic: `drive/<id>`, `window/<tag>`, `frame/<frame id>`,
//! `quality/<frame id>`, `group/<name>`, `ideal/<direction>`, `episode/<id>` and
//! `mitigation/<hash of action id and tag>`. Numeric frame values live as `ex:` literal
//! properties on the frame node so that generated claims can be checked against them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::turtle::{parse_turtle, serialize_turtle};
use crate::graph::{percent_decode, percent_encode, stable_id, Direction, GraphError, KnowledgeGraph, NodeId, Taxonomy, Triple};
use crate::telemetry::{Episode, FrameSet, RuleRepository, Window};

#[derive(Debug, Error)]
pub enum DataKgError {
    #[error("cannot materialize {0}: no attribute frames")]
    EmptyFrames(String),
    #[error("frame set for {found} does not match window tag {expected}")]
    TagMismatch { expected: String, found: String },
    #[error("window {0} not found")]
    NotFound(String),
    #[error("invalid window tag `{0}`: expected <drive>/<start>..<end>")]
    InvalidTag(String),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("serialization error: {0}")]
    Serialize(#[from] crate::graph::turtle::SerializeError),
    #[error("turtle error: {0}")]
    Turtle(#[from] crate::graph::turtle::TurtleError),
    #[error("storage error at {path}: {source}")]
    Storage { path: String, source: std::io::Error },
}

fn storage(path: &Path) -> impl FnOnce(std::io::Error) -> DataKgError + '_ {
    move |source| DataKgError::Storage { path: path.display().to_string(), source }
}

/// `<drive>/<start>..<end>`; the drive id may itself contain slashes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowTag {
    pub drive_id: String,
    pub window: Window,
    pub rules_version: u32,
}

impl WindowTag {
    pub fn new(drive_id: &str, window: Window, rules_version: u32) -> Self {
        Self { drive_id: drive_id.to_string(), window, rules_version }
    }

    pub fn of(frames: &FrameSet) -> Self {
        Self::new(&frames.drive_id, frames.window, frames.rules_version)
    }

    /// Parses the string form; the rules version is not part of it and is supplied.
    pub fn parse(s: &str, rules_version: u32) -> Result<Self, DataKgError> {
        let (drive, window) = s.rsplit_once('/').ok_or_else(|| DataKgError::InvalidTag(s.to_string()))?;
        if drive.is_empty() {
            return Err(DataKgError::InvalidTag(s.to_string()));
        }
        let window: Window = window.parse().map_err(|_| DataKgError::InvalidTag(s.to_string()))?;
        Ok(Self::new(drive, window, rules_version))
    }

    pub fn node(&self) -> NodeId {
        NodeId::data("window", &self.to_string())
    }
}

impl fmt::Display for WindowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.drive_id, self.window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSubgraph {
    pub tag: WindowTag,
    pub graph: KnowledgeGraph,
    /// Minimum attribute-frame coverage.
    pub coverage: f64,
    /// Retrieval/prediction weight in [0, 1]; 1 until gated.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationAction {
    pub action_id: String,
    pub description: String,
    pub accepted_at: DateTime<Utc>,
    pub operator: String,
    pub window_tag: String,
    pub expected_metric: String,
    pub expected_direction: Direction,
}

pub fn drive_node(drive: &str) -> NodeId {
    NodeId::data("drive", drive)
}

pub fn frame_node(frame_id: &str) -> NodeId {
    NodeId::data("frame", frame_id)
}

pub fn quality_node(frame_id: &str) -> NodeId {
    NodeId::data("quality", frame_id)
}

pub fn episode_node(id: &str) -> NodeId {
    NodeId::data("episode", id)
}

pub fn mitigation_node(action_id: &str, tag: &WindowTag) -> NodeId {
    NodeId::data("mitigation", &stable_id(&[action_id, &tag.to_string()]))
}

fn rel(name: &str) -> NodeId {
    NodeId::term(name)
}

fn edge(g: &mut KnowledgeGraph, s: &NodeId, r: &str, o: &NodeId) {
    g.add_edge(Triple::new(s.clone(), rel(r), o.clone()));
}

struct Props<'a> {
    g: &'a mut KnowledgeGraph,
    node: NodeId,
}

impl Props<'_> {
    fn set(&mut self, name: &str, v: impl Into<crate::graph::Literal>) -> &mut Self {
        self.g.set_property(&self.node, rel(name), v);
        self
    }

    fn opt(&mut self, name: &str, v: Option<f64>) -> &mut Self {
        if let Some(v) = v {
            self.set(name, v);
        }
        self
    }
}

fn props<'a>(g: &'a mut KnowledgeGraph, node: &NodeId) -> Props<'a> {
    Props { g, node: node.clone() }
}

fn days_text(days: &[usize]) -> String {
    if days.is_empty() {
        "none".to_string()
    } else {
        days.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// `temperature` → `temperatureMedian`, `vibration_amplitude` → `vibrationAmplitudeMedian`.
fn factor_prop(factor: &str, suffix: &str) -> String {
    let mut out = String::new();
    let mut upper = false;
    for c in factor.chars() {
        if c == '_' {
            upper = true;
        } else if upper {
            out.extend(c.to_uppercase());
            upper = false;
        } else {
            out.push(c);
        }
    }
    out + suffix
}

/// Builds the typed subgraph of one window. Concept nodes reached by `measures` edges take
/// their class from the taxonomy.
pub fn materialize_window(
    frames: &FrameSet,
    episodes: &[Episode],
    rules: &RuleRepository,
    tag: &WindowTag,
    taxonomy: &Taxonomy,
) -> Result<DataSubgraph, DataKgError> {
    if frames.drive_id != tag.drive_id || frames.window != tag.window {
        return Err(DataKgError::TagMismatch { expected: tag.to_string(), found: WindowTag::of(frames).to_string() });
    }
    if frames.attributes.is_empty() {
        return Err(DataKgError::EmptyFrames(tag.to_string()));
    }
    let mut g = KnowledgeGraph::new();
    let tag_text = tag.to_string();
    let drive = drive_node(&tag.drive_id);
    let window = tag.node();
    let dq = quality_node(&frames.quality.frame_id);
    g.add_typed(drive.clone(), "Drive")?;
    g.add_typed(window.clone(), "Window")?;
    g.add_typed(dq.clone(), "DataQuality")?;
    props(&mut g, &drive).set("driveId", tag.drive_id.as_str()).set("model", frames.model.as_str());
    let coverage = frames.coverage();
    props(&mut g, &window)
        .set("windowTag", tag_text.as_str())
        .set("start", tag.window.start.to_string())
        .set("end", tag.window.end.to_string())
        .set("windowDays", tag.window.len_days())
        .set("rulesVersion", rules.version)
        .set("coverage", coverage)
        .set("weight", 1.0)
        .set("confidence", 1.0);
    edge(&mut g, &drive, "hasWindow", &window);
    edge(&mut g, &window, "hasQuality", &dq);

    let q = &frames.quality;
    {
        let mut p = props(&mut g, &dq);
        p.set("frameId", q.frame_id.as_str())
            .set("windowTag", tag_text.as_str())
            .set("missingDays", q.missing_days)
            .set("absentRows", q.absent_rows)
            .set("imputedValues", q.imputed_values);
        for (src, c) in &q.coverage {
            p.set(&factor_prop("coverage_", src), *c);
        }
    }
    for n in &q.notes {
        g.add_property(&dq, rel("note"), n.as_str());
    }
    for f in q.sensor_flags.iter().chain(&q.validity_flags) {
        g.add_property(&dq, rel("flag"), f.as_str());
    }

    let mut frame_nodes: BTreeMap<&str, NodeId> = BTreeMap::new();
    for f in &frames.attributes {
        let node = frame_node(&f.frame_id);
        frame_nodes.insert(&f.frame_id, node.clone());
        g.add_typed(node.clone(), "AttributeFrame")?;
        edge(&mut g, &window, "hasAttrFrame", &node);
        edge(&mut g, &node, "hasQuality", &dq);
        let group = NodeId::data("group", f.group.as_str());
        g.add_typed(group.clone(), "Group")?;
        g.set_property(&group, rel("label"), f.group.as_str());
        edge(&mut g, &node, "belongsToGroup", &group);
        let ideal = NodeId::data("ideal", f.ideal.as_str());
        g.add_typed(ideal.clone(), "IdealDirection")?;
        g.set_property(&ideal, rel("label"), f.ideal.as_str());
        edge(&mut g, &node, "hasIdeal", &ideal);
        let concept = NodeId::term(&f.concept);
        g.add_typed(concept.clone(), taxonomy.class_of(&f.concept).unwrap_or("Concept"))?;
        edge(&mut g, &node, "measures", &concept);

        let (s, t, qa) = (&f.summary, &f.temporal, &f.quality);
        let mut p = props(&mut g, &node);
        p.set("frameId", f.frame_id.as_str())
            .set("attribute", f.attribute.as_str())
            .set("name", f.name.as_str())
            .set("unit", f.unit.as_str())
            .set("method", f.method.as_str())
            .set("windowTag", tag_text.as_str())
            .set("coverage", qa.coverage)
            .set("observed", qa.observed)
            .set("imputed", qa.imputed)
            .set("missing", qa.missing)
            .set("windowDays", qa.window_days)
            .set("median", s.median)
            .set("p95", s.p95)
            .set("first", s.first)
            .set("last", s.last)
            .set("max", s.max)
            .set("delta", s.delta)
            .opt("slope", t.slope)
            .opt("seasonality", t.seasonality)
            .opt("burstiness", t.burstiness)
            .set("changePoints", days_text(&t.change_points))
            .set("spikeDays", days_text(&t.spike_days))
            .set("spikeCount", t.spike_days.len())
            .set("confidence", 1.0);
        if let Some(mk) = t.mann_kendall {
            p.set("mkS", mk.s).set("mkVariance", mk.variance).set("mkZ", mk.z).set("mkP", mk.p);
        }
        if let Some(e) = t.exposure.first() {
            let dir = match e.threshold.direction {
                crate::telemetry::rules::ThresholdDirection::Above => "above",
                crate::telemetry::rules::ThresholdDirection::Below => "below",
            };
            p.set("exposureDays", e.days).set("exposureThreshold", e.threshold.value).set("exposureDirection", dir);
        }
    }

    if let Some(w) = &frames.workload {
        let node = frame_node(&w.frame_id);
        frame_nodes.insert(&w.frame_id, node.clone());
        g.add_typed(node.clone(), "WorkloadFrame")?;
        edge(&mut g, &window, "hasContext", &node);
        edge(&mut g, &node, "hasQuality", &dq);
        let units = w.units.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        let mut p = props(&mut g, &node);
        p.set("frameId", w.frame_id.as_str())
            .set("windowTag", tag_text.as_str())
            .set("method", format!("rules-v{}:median-read-share,mean-queue-depth,cv-io-count", rules.version))
            .set("unit", units)
            .set("coverage", w.quality.coverage)
            .set("observed", w.quality.observed)
            .set("windowDays", w.quality.window_days)
            .opt("readShare", w.read_share)
            .opt("avgQueueDepth", w.avg_queue_depth)
            .opt("burstiness", w.burstiness)
            .set("confidence", 1.0);
        if let Some(c) = &w.category {
            p.set("category", c.as_str());
        }
    }
    if let Some(e) = &frames.env {
        let node = frame_node(&e.frame_id);
        frame_nodes.insert(&e.frame_id, node.clone());
        g.add_typed(node.clone(), "EnvFrame")?;
        edge(&mut g, &window, "hasContext", &node);
        edge(&mut g, &node, "hasQuality", &dq);
        let coverage = e.factors.values().map(|f| f.quality.coverage).fold(0.0, f64::max);
        let units = e.factors.iter().map(|(k, f)| format!("{k}={}", f.unit)).collect::<Vec<_>>().join(";");
        let mut p = props(&mut g, &node);
        p.set("frameId", e.frame_id.as_str())
            .set("windowTag", tag_text.as_str())
            .set("method", format!("rules-v{}:median,p95-linear,max,excursions", rules.version))
            .set("unit", units)
            .set("coverage", coverage)
            .set("confidence", 1.0);
        for (name, f) in &e.factors {
            let peak = f.excursions.iter().map(|x| x.peak).reduce(f64::max);
            p.set(&factor_prop(name, "Median"), f.median)
                .set(&factor_prop(name, "P95"), f.p95)
                .set(&factor_prop(name, "Max"), f.max)
                .set(&factor_prop(name, "Unit"), f.unit.as_str())
                .set(&factor_prop(name, "Concept"), f.concept.as_str())
                .set(&factor_prop(name, "Excursions"), f.excursions.len())
                .opt(&factor_prop(name, "ExcursionPeak"), peak);
        }
    }

    for ep in episodes {
        let node = episode_node(&ep.episode_id);
        g.add_typed(node.clone(), "Episode")?;
        edge(&mut g, &window, "hasEpisode", &node);
        for t in &ep.triggers {
            // Triggers always name frames of this frame set.
            if let Some(f) = frame_nodes.get(t.as_str()) {
                edge(&mut g, &node, "triggeredBy", f);
            }
        }
        props(&mut g, &node)
            .set("kind", ep.kind.as_str())
            .set("windowTag", tag_text.as_str())
            .set("startDay", ep.start_day)
            .set("signals", ep.signals.join(","))
            .opt("preLevel", ep.pre_level)
            .opt("postLevel", ep.post_level)
            .opt("correlation", ep.correlation)
            .set("confidence", 1.0);
        if let Some(n) = ep.pairs {
            g.set_property(&node, rel("pairs"), n);
        }
    }
    Ok(DataSubgraph { tag: tag.clone(), graph: g, coverage, weight: 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub kept: Vec<DataSubgraph>,
    /// (tag, coverage) of every dropped window.
    pub dropped: Vec<(WindowTag, f64)>,
}

/// Sets window weight from coverage; data-node confidence equals the window weight.
fn set_weight(sg: &mut DataSubgraph, weight: f64) {
    sg.weight = weight;
    let ids: Vec<NodeId> = sg
        .graph
        .nodes()
        .filter(|(_, n)| n.properties.contains_key(&rel("confidence")))
        .map(|(id, _)| id.clone())
        .collect();
    for id in ids {
        sg.graph.set_property(&id, rel("confidence"), weight);
    }
    let class = NodeId::term("Window");
    let windows: Vec<NodeId> = sg.graph.nodes_of_class(&class).cloned().collect();
    for w in windows {
        sg.graph.set_property(&w, rel("weight"), weight);
    }
}

pub fn gate_by_coverage(subgraphs: Vec<DataSubgraph>, rules: &RuleRepository) -> GateOutcome {
    let mut out = GateOutcome { kept: Vec::new(), dropped: Vec::new() };
    for mut sg in subgraphs {
        match rules.coverage_weight(sg.coverage) {
            Some(w) => {
                set_weight(&mut sg, w);
                out.kept.push(sg);
            }
            None => out.dropped.push((sg.tag.clone(), sg.coverage)),
        }
    }
    out
}

/// Adds the action node with its `appliedTo` edge. Returns false when the action was
/// already attached to this window.
pub fn attach_mitigation(
    subgraph: &mut DataSubgraph,
    tag: &WindowTag,
    action: &MitigationAction,
) -> Result<bool, DataKgError> {
    if subgraph.tag.to_string() != tag.to_string() || !subgraph.graph.contains_node(&tag.node()) {
        return Err(DataKgError::NotFound(tag.to_string()));
    }
    let node = mitigation_node(&action.action_id, tag);
    if subgraph.graph.contains_node(&node) {
        return Ok(false);
    }
    let g = &mut subgraph.graph;
    g.add_typed(node.clone(), "MitigationAction")?;
    edge(g, &node, "appliedTo", &tag.node());
    props(g, &node)
        .set("actionId", action.action_id.as_str())
        .set("description", action.description.as_str())
        .set("acceptedAt", action.accepted_at.to_rfc3339())
        .set("operator", action.operator.as_str())
        .set("windowTag", tag.to_string())
        .set("expectedMetric", action.expected_metric.as_str())
        .set("expectedDirection", action.expected_direction.as_str());
    Ok(true)
}

/// Reconstructs the subgraph header fields from a stored graph.
pub fn subgraph_from_graph(graph: KnowledgeGraph) -> Result<DataSubgraph, DataKgError> {
    let window_class = NodeId::term("Window");
    let w = graph
        .nodes_of_class(&window_class)
        .next()
        .cloned()
        .ok_or_else(|| DataKgError::NotFound("window node".into()))?;
    let text = graph.text(&w, "windowTag").ok_or_else(|| DataKgError::InvalidTag(w.to_string()))?;
    let version = graph.number(&w, "rulesVersion").unwrap_or(0.0) as u32;
    let tag = WindowTag::parse(text, version)?;
    let coverage = graph.number(&w, "coverage").unwrap_or(0.0);
    let weight = graph.number(&w, "weight").unwrap_or(1.0);
    Ok(DataSubgraph { tag, graph, coverage, weight })
}

/// `datakg/<percent-encoded drive>/<start>..<end>.ttl`
#[derive(Debug, Clone)]
pub struct DataKgStore {
    root: PathBuf,
}

impl DataKgStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, tag: &WindowTag) -> PathBuf {
        self.root.join(percent_encode(&tag.drive_id)).join(format!("{}.ttl", tag.window))
    }

    pub fn save(&self, sg: &DataSubgraph) -> Result<PathBuf, DataKgError> {
        let path = self.path_for(&sg.tag);
        let text = serialize_turtle(&sg.graph)?;
        let dir = path.parent().expect("has parent");
        fs::create_dir_all(dir).map_err(storage(dir))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(storage(&tmp))?;
        fs::rename(&tmp, &path).map_err(storage(&path))?;
        Ok(path)
    }

    pub fn load(&self, tag: &WindowTag) -> Result<DataSubgraph, DataKgError> {
        let path = self.path_for(tag);
        if !path.exists() {
            return Err(DataKgError::NotFound(tag.to_string()));
        }
        let text = fs::read_to_string(&path).map_err(storage(&path))?;
        subgraph_from_graph(parse_turtle(&text)?)
    }

    pub fn exists(&self, tag: &WindowTag) -> bool {
        self.path_for(tag).exists()
    }

    pub fn drives(&self) -> Result<Vec<String>, DataKgError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in fs::read_dir(&self.root).map_err(storage(&self.root))? {
            let e = e.map_err(storage(&self.root))?;
            if e.path().is_dir() {
                out.push(percent_decode(&e.file_name().to_string_lossy()));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Stored windows of one drive, in date order.
    pub fn windows(&self, drive: &str) -> Result<Vec<Window>, DataKgError> {
        let dir = self.root.join(percent_encode(drive));
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(storage(&dir))? {
            let name = e.map_err(storage(&dir))?.file_name().to_string_lossy().into_owned();
            if let Some(w) = name.strip_suffix(".ttl").and_then(|s| s.parse::<Window>().ok()) {
                out.push(w);
            }
        }
        out.sort();
        Ok(out)
    }
}

/// The unit a stored numeric property is expressed in, used to bind generated claims to
/// the graph: level statistics carry the frame unit, slopes its per-day rate, counts of
/// days are `days`.
pub fn property_unit(graph: &KnowledgeGraph, node: &NodeId, property: &str) -> Option<String> {
    let frame_unit = || graph.text(node, "unit").map(str::to_string);
    let unit = match property {
        "median" | "p95" | "first" | "last" | "max" | "delta" | "exposureThreshold" | "preLevel" | "postLevel" => {
            return frame_unit();
        }
        "slope" => return frame_unit().map(|u| format!("{u}/day")),
        "observed" | "imputed" | "missing" | "windowDays" | "exposureDays" | "missingDays" | "absentRows"
        | "spikeCount" | "startDay" => "days",
        "imputedValues" => "values",
        "coverage" | "readShare" | "weight" | "confidence" => "fraction",
        "mkP" => "p-value",
        "mkZ" => "z",
        "mkS" => "score",
        "mkVariance" => "score^2",
        "seasonality" | "correlation" => "r",
        "burstiness" => "cv",
        "avgQueueDepth" => "requests",
        "pairs" => "pairs",
        other => {
            for suffix in ["Median", "P95", "Max", "ExcursionPeak"] {
                if let Some(factor) = other.strip_suffix(suffix) {
                    return graph.text(node, &format!("{factor}Unit")).map(str::to_string);
                }
            }
            if other.ends_with("Excursions") {
                return Some("excursions".to_string());
            }
            return None;
        }
    };
    Some(unit.to_string())
}
