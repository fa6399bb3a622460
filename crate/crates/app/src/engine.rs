//! The workspace engine: every store under one data directory and the operations the CLI
//! and the HTTP service share.
//!
//! Layout below the root:
//! `telemetry/<drive>.json`, `labels.json`, `frames/<drive>/<window>.json`,
//! `datakg/<drive>/<window>.ttl`, `gating.json`, `litkg/`, `taxonomy.json`,
//! `proposals.jsonl`, `audit/<key>/<seq>.{json,ttl}`, `audit-attempts.jsonl`,
//! `mitigations.jsonl`, `followups.json`. Drive ids are percent-encoded in paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use ssdkg_core::datakg::{
    attach_mitigation, gate_by_coverage, materialize_window, DataKgStore, DataSubgraph, MitigationAction, WindowTag,
};
use ssdkg_core::evaluation::{
    build_report, counterfactual_validity, faithfulness_precision, label_window, LabelRecord, MetricsReport,
    PredictionRecord, WindowOutcome, TRANSCRIPTION_TOLERANCE,
};
use ssdkg_core::graph::{merge, percent_encode, serialize_turtle, stable_id, Direction, KnowledgeGraph, OntologySchema, Taxonomy};
use ssdkg_core::literature::{
    process_batch, BatchOutcome, ConceptProposal, ExtractionBatch, LiteratureStore, MaterializeOutcome, ProposalQueue,
    DEFAULT_MIN_CONFIDENCE, DOWN_WEIGHT,
};
use ssdkg_core::reasoning::backend::TEMPLATE_ID;
use ssdkg_core::reasoning::{
    assemble_prompt, generate, raw_log_context, retrieve, summarize_subgraph, vocabulary_terms, AnalysisResponse,
    EvidenceItem, GenerationBackend, Perturbation, PromptDocument, QueryIntent, QueryKind, RemoteBackend,
    ReasoningError, Scope, TemplateBackend,
};
use ssdkg_core::telemetry::{
    detect_episodes, emit_frames, flag_non_monotone, impute_gaps, load_failure_labels, load_telemetry, Column,
    DriveSeries, Episode, FrameSet, Obs, RuleRepository, Window,
};

use crate::audit::{ArtifactBundle, AuditContext, AuditRecord, AuditStore};
use crate::config::{Ablation, BackendChoice, ServiceConfig};
use crate::error::{AppError, Result};
use crate::followup::{assess, FollowUpStatus, FollowUpStore, FollowUpTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frames: FrameSet,
    pub episodes: Vec<Episode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowState {
    /// Frames emitted, not yet materialized.
    Framed,
    Kept,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStatus {
    pub tag: String,
    pub drive_id: String,
    pub window: Window,
    pub coverage: f64,
    /// Retrieval/prediction weight; absent unless kept.
    pub weight: Option<f64>,
    pub state: WindowState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub drives: Vec<String>,
    pub rows: usize,
    pub warnings: Vec<String>,
    /// Filled when ingestion also emitted frames and materialized.
    pub windows: Vec<WindowStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub kind: QueryKind,
    pub question: String,
    pub scope: Scope,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResult {
    pub audit_key: String,
    pub sequence: u64,
    pub record_id: String,
    pub windows: Vec<String>,
    pub variant: String,
    pub literature_query: String,
    pub evidence: Vec<EvidenceItem>,
    pub prompt: PromptDocument,
    pub response: AnalysisResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub record_id: String,
    /// Re-generated from the stored prompt (deterministic backends only).
    pub reexecuted: bool,
    /// Replayed text equals the stored text byte for byte.
    pub identical: bool,
    pub response: AnalysisResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationRequest {
    pub action_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_operator")]
    pub operator: String,
    pub expected_metric: String,
    pub expected_direction: Direction,
    /// Defaults to now.
    #[serde(default)]
    pub accepted_at: Option<DateTime<Utc>>,
}

fn default_operator() -> String {
    "operator".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationOutcome {
    /// False when the action was already attached to this window.
    pub attached: bool,
    pub action: MitigationAction,
    pub task: FollowUpTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteratureBuild {
    pub collection: String,
    pub version: u32,
    pub batches: Vec<BatchSummary>,
    pub materialized: Option<MaterializeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub document_id: String,
    pub accepted: usize,
    pub rejected: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub proposals_queued: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub records: Vec<String>,
    /// Windows removed by coverage gating; never part of the prediction set.
    pub dropped: Vec<(String, f64)>,
    pub variant: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub question: Option<String>,
    /// Reference answers keyed by window tag, for BLEU-4 and ROUGE-L.
    pub references: BTreeMap<String, String>,
    /// Restrict to these windows; all kept windows otherwise.
    pub windows: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GateEntry {
    coverage: f64,
    weight: Option<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    serde_json::from_str(&text).map_err(|e| AppError::Corrupt { path: path.display().to_string(), message: e.to_string() })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value).expect("value serializes")).map_err(AppError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(AppError::io(path))
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(AppError::io(path))?;
    writeln!(f, "{}", serde_json::to_string(value).expect("value serializes")).map_err(AppError::io(path))
}

/// Union of two series of one drive; values in `new` win on overlapping days.
pub fn merge_series(old: &DriveSeries, new: &DriveSeries, rules: &RuleRepository) -> DriveSeries {
    let start = old.start.min(new.start);
    let end = old.end().max(new.end());
    let days = (end - start).num_days() as usize + 1;
    let mut out = DriveSeries::new(&new.drive_id, &new.model, start, days);
    // Declared columns survive even when every cell is empty, so frames report them missing.
    for name in old.columns.keys().chain(new.columns.keys()) {
        out.columns.insert(name.clone(), Column { values: vec![None; days], status: vec![Obs::Missing; days] });
    }
    let mut tags: Option<Vec<Option<String>>> = None;
    for src in [old, new] {
        for d in (0..src.days).filter(|&d| src.present[d]) {
            let i = out.index_of(src.date(d)).expect("inside union span");
            out.present[i] = true;
            // A re-delivered day replaces the earlier row entirely.
            for col in out.columns.values_mut() {
                col.values[i] = None;
                col.status[i] = Obs::Missing;
            }
            out.flags[i] = src.flags[d].iter().filter(|f| !f.starts_with("non-monotone:")).cloned().collect();
            for (name, col) in &src.columns {
                if let (Some(v), Obs::Observed) = (col.values[d], col.status[d]) {
                    out.set(name, i, v);
                }
            }
            if let Some(t) = &src.workload_tag {
                tags.get_or_insert_with(|| vec![None; days])[i] = t[d].clone();
            }
        }
    }
    out.workload_tag = tags;
    flag_non_monotone(&mut out, rules);
    out
}

/// Complete tumbling windows from the first day of the series.
pub fn series_windows(series: &DriveSeries, window_days: usize) -> Vec<Window> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_days <= series.days {
        out.push(Window::starting(series.date(start), window_days));
        start += window_days;
    }
    out
}

pub struct Engine {
    config: ServiceConfig,
    rules: RuleRepository,
    schema: OntologySchema,
    backend: Arc<dyn GenerationBackend>,
    audit: AuditStore,
    datakg: DataKgStore,
    literature: LiteratureStore,
    followups: FollowUpStore,
    /// Serializes every mutation of telemetry, frames, data graphs, literature and taxonomy.
    writes: Mutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("root", &self.config.data_dir).field("backend", &self.backend.id()).finish()
    }
}

impl Engine {
    /// Opens (creating if needed) the workspace at `config.data_dir` with the configured
    /// backend. The remote backend reads its endpoint from the environment.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        let backend: Arc<dyn GenerationBackend> = match config.backend {
            BackendChoice::Template => Arc::new(TemplateBackend),
            BackendChoice::Remote => Arc::new(RemoteBackend::from_env()?),
        };
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: ServiceConfig, backend: Arc<dyn GenerationBackend>) -> Result<Self> {
        let root = config.data_dir.clone();
        fs::create_dir_all(&root).map_err(AppError::io(&root))?;
        let rules_path = root.join("rules.json");
        let rules = if rules_path.exists() {
            let text = fs::read_to_string(&rules_path).map_err(AppError::io(&rules_path))?;
            RuleRepository::from_json(&text)?
        } else {
            RuleRepository::builtin()
        };
        Ok(Self {
            rules,
            schema: OntologySchema::builtin(),
            backend,
            audit: AuditStore::new(root.join("audit")),
            datakg: DataKgStore::new(root.join("datakg")),
            literature: LiteratureStore::new(root.join("litkg")),
            followups: FollowUpStore::new(root.join("followups.json")),
            config,
            writes: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn rules(&self) -> &RuleRepository {
        &self.rules
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn audit(&self) -> &AuditStore {
        &self.audit
    }

    pub fn literature(&self) -> &LiteratureStore {
        &self.literature
    }

    fn root(&self) -> &Path {
        &self.config.data_dir
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ()> {
        self.writes.lock().expect("workspace write lock poisoned")
    }

    // ---- taxonomy -------------------------------------------------------------------

    fn taxonomy_path(&self) -> PathBuf {
        self.root().join("taxonomy.json")
    }

    /// The workspace taxonomy: the builtin tree plus approved proposals.
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let p = self.taxonomy_path();
        if !p.exists() {
            return Ok(Taxonomy::builtin());
        }
        let text = fs::read_to_string(&p).map_err(AppError::io(&p))?;
        Ok(Taxonomy::from_json(&text)?)
    }

    fn proposals(&self) -> Result<ProposalQueue> {
        Ok(ProposalQueue::open(self.root().join("proposals.jsonl"))?)
    }

    pub fn list_proposals(&self) -> Result<Vec<ConceptProposal>> {
        Ok(self.proposals()?.entries().cloned().collect())
    }

    pub fn propose_concept(&self, name: &str, definition: &str, parent: &str, source: &str) -> Result<ConceptProposal> {
        let _g = self.lock();
        let taxonomy = self.taxonomy()?;
        let mut q = self.proposals()?;
        Ok(q.queue(ConceptProposal::draft(name, definition, parent, source), &taxonomy)?.entry)
    }

    /// Approves a queued proposal and persists the grown taxonomy; returns its version.
    pub fn approve_concept(&self, id: &str) -> Result<u64> {
        let _g = self.lock();
        let mut taxonomy = self.taxonomy()?;
        let mut q = self.proposals()?;
        let version = q.approve(id, &mut taxonomy)?;
        let p = self.taxonomy_path();
        fs::write(&p, taxonomy.to_json()).map_err(AppError::io(&p))?;
        Ok(version)
    }

    // ---- literature -----------------------------------------------------------------

    /// Validates batches against the current global graph without writing anything.
    pub fn validate_batches(&self, batches: &[ExtractionBatch], collection: &str) -> Result<Vec<BatchOutcome>> {
        let taxonomy = self.taxonomy()?;
        let global = self.literature.global()?;
        Ok(batches
            .iter()
            .map(|b| process_batch(b, collection, &taxonomy, &self.schema, &global, DEFAULT_MIN_CONFIDENCE))
            .collect())
    }

    /// Validates batches, queues their concept proposals and materializes the accepted
    /// claims as the next version of `collection`.
    pub fn build_literature(&self, batches: &[ExtractionBatch], collection: &str) -> Result<LiteratureBuild> {
        let _g = self.lock();
        let taxonomy = self.taxonomy()?;
        let global = self.literature.global()?;
        let version = self.literature.latest_version(collection)?.unwrap_or(0) + 1;
        let mut accepted = Vec::new();
        let mut summaries = Vec::new();
        let mut queue = self.proposals()?;
        for b in batches {
            let out = process_batch(b, collection, &taxonomy, &self.schema, &global, DEFAULT_MIN_CONFIDENCE);
            let mut queued = 0;
            for d in out.drafts {
                if !queue.queue(d, &taxonomy)?.duplicate {
                    queued += 1;
                }
            }
            summaries.push(BatchSummary {
                document_id: b.document_id.clone(),
                accepted: out.report.accepted.len(),
                rejected: out.report.rejected.iter().map(|r| (r.claim.id.clone(), r.reason.as_str().to_string())).collect(),
                warnings: out.warnings,
                proposals_queued: queued,
            });
            accepted.extend(out.report.accepted);
        }
        let materialized = if accepted.is_empty() {
            None
        } else {
            Some(self.literature.materialize(&accepted, collection, version, DOWN_WEIGHT)?)
        };
        Ok(LiteratureBuild { collection: collection.to_string(), version, batches: summaries, materialized })
    }

    /// Recomputes the merged global graph from the latest collection versions.
    pub fn merge_literature(&self) -> Result<KnowledgeGraph> {
        let _g = self.lock();
        Ok(self.literature.rebuild_global(DOWN_WEIGHT)?)
    }

    // ---- telemetry, frames, data graphs ---------------------------------------------

    fn series_path(&self, drive: &str) -> PathBuf {
        self.root().join("telemetry").join(format!("{}.json", percent_encode(drive)))
    }

    fn frames_path(&self, tag: &WindowTag) -> PathBuf {
        self.root().join("frames").join(percent_encode(&tag.drive_id)).join(format!("{}.json", tag.window))
    }

    fn gating_path(&self) -> PathBuf {
        self.root().join("gating.json")
    }

    fn gating(&self) -> Result<BTreeMap<String, GateEntry>> {
        let p = self.gating_path();
        if p.exists() {
            read_json(&p)
        } else {
            Ok(BTreeMap::new())
        }
    }

    pub fn series(&self, drive: &str) -> Result<DriveSeries> {
        let p = self.series_path(drive);
        if !p.exists() {
            return Err(AppError::NotFound(format!("telemetry for drive {drive}")));
        }
        read_json(&p)
    }

    pub fn drives(&self) -> Result<Vec<String>> {
        let dir = self.root().join("telemetry");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(AppError::io(&dir))? {
            let name = e.map_err(AppError::io(&dir))?.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".json") {
                out.push(ssdkg_core::graph::percent_decode(stem));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Loads a telemetry CSV and merges it into the stored per-drive series.
    pub fn ingest_telemetry(&self, csv: &str) -> Result<IngestReport> {
        let _g = self.lock();
        self.ingest_locked(csv)
    }

    fn ingest_locked(&self, csv: &str) -> Result<IngestReport> {
        let set = load_telemetry(csv.as_bytes(), &self.rules)?;
        let mut report = IngestReport { warnings: set.warnings, ..Default::default() };
        for (drive, series) in set.series {
            report.rows += series.present.iter().filter(|p| **p).count();
            let p = self.series_path(&drive);
            let merged = if p.exists() { merge_series(&read_json(&p)?, &series, &self.rules) } else { series };
            if merged.days < self.rules.window_days {
                report.warnings.push(format!(
                    "drive {drive}: {} days of telemetry, shorter than one {}-day window",
                    merged.days, self.rules.window_days
                ));
            }
            write_json(&p, &merged)?;
            report.drives.push(drive);
        }
        Ok(report)
    }

    /// Ingests, then emits frames and materializes every window of the ingested drives.
    pub fn ingest_and_process(&self, csv: &str) -> Result<IngestReport> {
        let _g = self.lock();
        let mut report = self.ingest_locked(csv)?;
        let drives: BTreeSet<String> = report.drives.iter().cloned().collect();
        self.frames_locked(Some(&drives))?;
        report.windows = self.materialize_locked(Some(&drives))?;
        Ok(report)
    }

    pub fn load_failure_labels(&self, csv: &str) -> Result<usize> {
        let _g = self.lock();
        let labels = load_failure_labels(csv.as_bytes())?;
        let p = self.root().join("labels.json");
        let mut all: BTreeMap<String, NaiveDate> = if p.exists() { read_json(&p)? } else { BTreeMap::new() };
        let n = labels.len();
        all.extend(labels);
        write_json(&p, &all)?;
        Ok(n)
    }

    pub fn failure_dates(&self) -> Result<BTreeMap<String, NaiveDate>> {
        let p = self.root().join("labels.json");
        if p.exists() {
            read_json(&p)
        } else {
            Ok(BTreeMap::new())
        }
    }

    fn selected(&self, drives: Option<&BTreeSet<String>>) -> Result<Vec<String>> {
        Ok(match drives {
            Some(d) => d.iter().cloned().collect(),
            None => self.drives()?,
        })
    }

    /// Emits frames (after gap imputation) and episodes for every complete window.
    pub fn emit_frames(&self, drives: Option<&BTreeSet<String>>) -> Result<Vec<WindowStatus>> {
        let _g = self.lock();
        self.frames_locked(drives)
    }

    fn frames_locked(&self, drives: Option<&BTreeSet<String>>) -> Result<Vec<WindowStatus>> {
        let mut out = Vec::new();
        for drive in self.selected(drives)? {
            let series = impute_gaps(&self.series(&drive)?, &self.rules);
            for w in series_windows(&series, self.rules.window_days) {
                let frames = emit_frames(&series, &w, &self.rules)?;
                let episodes = detect_episodes(&frames, &self.rules);
                let tag = WindowTag::of(&frames);
                out.push(WindowStatus {
                    tag: tag.to_string(),
                    drive_id: drive.clone(),
                    window: w,
                    coverage: frames.coverage(),
                    weight: None,
                    state: WindowState::Framed,
                });
                write_json(&self.frames_path(&tag), &FrameRecord { frames, episodes })?;
            }
        }
        Ok(out)
    }

    fn stored_frames(&self, drive: &str) -> Result<Vec<FrameRecord>> {
        let dir = self.root().join("frames").join(percent_encode(drive));
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(AppError::io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    pub fn parse_tag(&self, tag: &str) -> Result<WindowTag> {
        Ok(WindowTag::parse(tag, self.rules.version)?)
    }

    pub fn frames(&self, tag: &str) -> Result<FrameRecord> {
        let t = self.parse_tag(tag)?;
        let p = self.frames_path(&t);
        if !p.exists() {
            return Err(AppError::NotFound(format!("frames for window {tag}")));
        }
        read_json(&p)
    }

    fn mitigations_log(&self) -> PathBuf {
        self.root().join("mitigations.jsonl")
    }

    fn mitigations(&self) -> Result<Vec<MitigationAction>> {
        let p = self.mitigations_log();
        if !p.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&p).map_err(AppError::io(&p))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l)
                    .map_err(|e| AppError::Corrupt { path: p.display().to_string(), message: e.to_string() })
            })
            .collect()
    }

    /// Materializes stored frames, gates by coverage, persists kept windows and records the
    /// gate decision of every window. Accepted mitigations are re-attached.
    pub fn materialize(&self, drives: Option<&BTreeSet<String>>) -> Result<Vec<WindowStatus>> {
        let _g = self.lock();
        self.materialize_locked(drives)
    }

    fn materialize_locked(&self, drives: Option<&BTreeSet<String>>) -> Result<Vec<WindowStatus>> {
        let taxonomy = self.taxonomy()?;
        let mitigations = self.mitigations()?;
        let mut subgraphs = Vec::new();
        for drive in self.selected(drives)? {
            for rec in self.stored_frames(&drive)? {
                let tag = WindowTag::of(&rec.frames);
                subgraphs.push(materialize_window(&rec.frames, &rec.episodes, &self.rules, &tag, &taxonomy)?);
            }
        }
        let gate = gate_by_coverage(subgraphs, &self.rules);
        let mut gating = self.gating()?;
        let mut out = Vec::new();
        for mut sg in gate.kept {
            let tag = sg.tag.clone();
            for m in mitigations.iter().filter(|m| m.window_tag == tag.to_string()) {
                attach_mitigation(&mut sg, &tag, m)?;
            }
            self.datakg.save(&sg)?;
            gating.insert(tag.to_string(), GateEntry { coverage: sg.coverage, weight: Some(sg.weight) });
            out.push(WindowStatus {
                tag: tag.to_string(),
                drive_id: tag.drive_id.clone(),
                window: tag.window,
                coverage: sg.coverage,
                weight: Some(sg.weight),
                state: WindowState::Kept,
            });
        }
        for (tag, coverage) in gate.dropped {
            // A window that no longer passes the gate leaves the data graph store.
            let p = self.datakg.path_for(&tag);
            if p.exists() {
                fs::remove_file(&p).map_err(AppError::io(&p))?;
            }
            gating.insert(tag.to_string(), GateEntry { coverage, weight: None });
            out.push(WindowStatus {
                tag: tag.to_string(),
                drive_id: tag.drive_id.clone(),
                window: tag.window,
                coverage,
                weight: None,
                state: WindowState::Dropped,
            });
        }
        write_json(&self.gating_path(), &gating)?;
        out.sort_by(|a, b| a.tag.cmp(&b.tag));
        Ok(out)
    }

    /// Every framed window of one drive with its gate state.
    pub fn drive_windows(&self, drive: &str) -> Result<Vec<WindowStatus>> {
        let frames = self.stored_frames(drive)?;
        if frames.is_empty() && !self.series_path(drive).exists() {
            return Err(AppError::NotFound(format!("drive {drive}")));
        }
        let gating = self.gating()?;
        Ok(frames
            .iter()
            .map(|r| {
                let tag = WindowTag::of(&r.frames).to_string();
                let (state, weight) = match gating.get(&tag) {
                    Some(GateEntry { weight: Some(w), .. }) => (WindowState::Kept, Some(*w)),
                    Some(GateEntry { weight: None, .. }) => (WindowState::Dropped, None),
                    None => (WindowState::Framed, None),
                };
                WindowStatus {
                    drive_id: drive.to_string(),
                    window: r.frames.window,
                    coverage: r.frames.coverage(),
                    tag,
                    weight,
                    state,
                }
            })
            .collect())
    }

    /// Kept windows across the fleet, in tag order.
    pub fn kept_windows(&self) -> Result<Vec<String>> {
        Ok(self.gating()?.into_iter().filter(|(_, g)| g.weight.is_some()).map(|(t, _)| t).collect())
    }

    pub fn dropped_windows(&self) -> Result<Vec<(String, f64)>> {
        Ok(self.gating()?.into_iter().filter(|(_, g)| g.weight.is_none()).map(|(t, g)| (t, g.coverage)).collect())
    }

    /// The persisted data graph of a kept window.
    pub fn subgraph(&self, tag: &str) -> Result<DataSubgraph> {
        let t = self.parse_tag(tag)?;
        if let Some(GateEntry { coverage, weight: None }) = self.gating()?.get(tag) {
            return Err(AppError::Dropped { tag: tag.to_string(), coverage: *coverage });
        }
        match self.datakg.load(&t) {
            Ok(sg) => Ok(sg),
            Err(ssdkg_core::datakg::DataKgError::NotFound(_)) => {
                Err(AppError::NotFound(format!("data graph for window {tag} (not materialized)")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn subgraph_turtle(&self, tag: &str) -> Result<String> {
        serialize_turtle(&self.subgraph(tag)?.graph).map_err(|e| AppError::Corrupt { path: tag.into(), message: e.to_string() })
    }

    // ---- analysis -------------------------------------------------------------------

    fn audit_key(scope: &Scope) -> String {
        match scope {
            Scope::Window(t) => t.clone(),
            Scope::Cohort(tags) => {
                let mut sorted: Vec<&str> = tags.iter().map(String::as_str).collect();
                sorted.sort_unstable();
                sorted.dedup();
                format!("cohort-{}", stable_id(&sorted))
            }
        }
    }

    pub fn analyze(&self, req: AnalyzeRequest) -> Result<AnalyzeResult> {
        let literature = if self.config.ablation.no_litkg { None } else { Some(self.literature.global()?) };
        self.analyze_with(req, literature.as_ref(), self.config.ablation)
    }

    fn analyze_with(&self, req: AnalyzeRequest, literature: Option<&KnowledgeGraph>, ablation: Ablation) -> Result<AnalyzeResult> {
        let started_at = Utc::now();
        let intent = QueryIntent::new(req.kind, &req.question, req.scope, req.perturbations)?;
        let tags = intent.scope.tags();
        let taxonomy = self.taxonomy()?;
        let mut subgraphs = Vec::new();
        let mut frame_ids = Vec::new();
        let mut summaries = Vec::new();
        for tag in &tags {
            let sg = self.subgraph(tag)?;
            let rec = self.frames(tag)?;
            frame_ids.extend(rec.frames.frame_ids());
            summaries.push(if ablation.raw_logs { raw_log_context(&rec.frames) } else { summarize_subgraph(&sg)? });
            subgraphs.push(sg);
        }
        let (literature_query, evidence) = match literature {
            None => ("# literature retrieval disabled".to_string(), Vec::new()),
            Some(lit) => {
                let mut terms: Vec<String> = subgraphs.iter().flat_map(|sg| vocabulary_terms(sg, &taxonomy)).collect();
                terms.sort();
                terms.dedup();
                match retrieve(&intent, &terms, lit) {
                    Ok((q, items)) => (q.to_sparql(), items),
                    Err(ReasoningError::NoTerms) => ("# no vocabulary terms in scope".to_string(), Vec::new()),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let prompt = assemble_prompt(&intent, &summaries, &evidence, &self.config.prompt)?;
        let response = match generate(&prompt.text, self.backend.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                append_line(
                    &self.root().join("audit-attempts.jsonl"),
                    &serde_json::json!({
                        "at": Utc::now(),
                        "windows": tags,
                        "backend": self.backend.id(),
                        "error": e.to_string(),
                    }),
                )?;
                return Err(e.into());
            }
        };
        let snapshot = merge(subgraphs.iter().map(|s| &s.graph))?;
        let mut node_ids: Vec<String> = snapshot.nodes().map(|(id, _)| id.to_string()).collect();
        node_ids.sort();
        let bundle = ArtifactBundle {
            frame_ids: Some(frame_ids),
            node_ids: Some(node_ids),
            literature_query: Some(literature_query.clone()),
            evidence_ids: Some(evidence.iter().map(EvidenceItem::id).collect()),
            prompt: Some(prompt.clone()),
            response: Some(response.clone()),
        };
        let key = Self::audit_key(&intent.scope);
        let ctx = AuditContext {
            windows: prompt.windows.clone(),
            intent,
            variant: ablation.variant().to_string(),
            deterministic: self.backend.deterministic(),
            started_at,
        };
        let record = self.audit.record(&key, bundle, ctx, &snapshot)?;
        Ok(AnalyzeResult {
            audit_key: key,
            sequence: record.sequence,
            record_id: record.record_id,
            windows: record.windows,
            variant: record.variant,
            literature_query,
            evidence,
            prompt,
            response,
        })
    }

    /// Template records are regenerated from the stored prompt; other records are returned
    /// verbatim without contacting any backend.
    pub fn replay(&self, key: &str, sequence: u64) -> Result<ReplayOutcome> {
        let record = self.audit.get(key, sequence)?;
        replay_record(&record)
    }

    pub fn audit_records(&self, key: &str) -> Result<Vec<AuditRecord>> {
        self.audit.list(key)
    }

    // ---- mitigations and follow-ups -------------------------------------------------

    /// Attaches an accepted mitigation to a kept window and schedules its follow-up.
    /// Idempotent per (action, window).
    pub fn accept_mitigation(&self, tag: &str, req: MitigationRequest) -> Result<MitigationOutcome> {
        if req.action_id.trim().is_empty() || req.expected_metric.trim().is_empty() {
            return Err(AppError::BadRequest("action_id and expected_metric are required".into()));
        }
        let _g = self.lock();
        let t = self.parse_tag(tag)?;
        let mut sg = self.subgraph(tag)?;
        let existing = self.mitigations()?.into_iter().find(|m| m.window_tag == tag && m.action_id == req.action_id);
        let action = existing.unwrap_or_else(|| MitigationAction {
            action_id: req.action_id.clone(),
            description: req.description.clone(),
            accepted_at: req.accepted_at.unwrap_or_else(Utc::now),
            operator: req.operator.clone(),
            window_tag: tag.to_string(),
            expected_metric: req.expected_metric.clone(),
            expected_direction: req.expected_direction,
        });
        let attached = attach_mitigation(&mut sg, &t, &action)?;
        if attached {
            self.datakg.save(&sg)?;
            append_line(&self.mitigations_log(), &action)?;
        }
        let (task, _) = self.followups.schedule(&action, self.config.followup_horizon_days)?;
        Ok(MitigationOutcome { attached, action, task })
    }

    pub fn followups(&self) -> Result<Vec<FollowUpTask>> {
        self.followups.list()
    }

    /// Runs open follow-ups due on or before `today`.
    pub fn run_due(&self, today: NaiveDate) -> Result<Vec<FollowUpTask>> {
        self.followups.run_due(today, |task| {
            let tag = match self.parse_tag(&task.window_tag) {
                Ok(t) => t,
                Err(e) => return FollowUpStatus::Blocked { reason: e.to_string() },
            };
            let series = self.series(&tag.drive_id).ok();
            assess(task, series.as_ref(), &tag.window, &self.rules, today)
        })
    }

    // ---- evaluation -----------------------------------------------------------------

    /// Predictive analysis of every kept window (or the selected ones), scored against
    /// failure labels. Each analysis is audited like any other.
    pub fn evaluate(&self, opts: &EvalOptions) -> Result<EvalRun> {
        let ablation = self.config.ablation;
        let literature = if ablation.no_litkg { None } else { Some(self.literature.global()?) };
        let failures = self.failure_dates()?;
        let kept = self.kept_windows()?;
        let windows = match &opts.windows {
            Some(w) => w.clone(),
            None => kept.clone(),
        };
        let question = opts.question.clone().unwrap_or_else(|| {
            format!("Will this drive fail within {} days of the window end?", self.config.label_horizon_days)
        });
        let mut labels = BTreeMap::new();
        let mut outcomes = Vec::new();
        let mut records = Vec::new();
        for tag in &windows {
            let t = self.parse_tag(tag)?;
            let res = self.analyze_with(
                AnalyzeRequest {
                    kind: QueryKind::Predictive,
                    question: question.clone(),
                    scope: Scope::Window(tag.clone()),
                    perturbations: Vec::new(),
                },
                literature.as_ref(),
                ablation,
            )?;
            let sg = self.subgraph(tag)?;
            labels.insert(
                tag.clone(),
                label_window(tag, t.window.end, failures.get(&t.drive_id).copied(), self.config.label_horizon_days),
            );
            outcomes.push(window_outcome(tag, &res, &sg, opts.references.get(tag).cloned()));
            records.push(res.record_id);
        }
        let report = build_report(&labels, &outcomes)?;
        Ok(EvalRun { report, records, dropped: self.dropped_windows()?, variant: ablation.variant().to_string() })
    }

    pub fn labels_for(&self, windows: &[String]) -> Result<BTreeMap<String, LabelRecord>> {
        let failures = self.failure_dates()?;
        windows
            .iter()
            .map(|tag| {
                let t = self.parse_tag(tag)?;
                Ok((
                    tag.clone(),
                    label_window(tag, t.window.end, failures.get(&t.drive_id).copied(), self.config.label_horizon_days),
                ))
            })
            .collect()
    }
}

/// Scores one analysis: prediction from the structured block, FiP over the echoed
/// claims at transcription tolerance, CFV over counterfactual statements.
pub fn window_outcome(tag: &str, res: &AnalyzeResult, sg: &DataSubgraph, reference: Option<String>) -> WindowOutcome {
    let prediction = res.response.structured.as_ref().and_then(|b| {
        b.fail_flag.map(|fail| PredictionRecord { fail, ttf_days: b.ttf_days, tail_latency_ms: b.tail_latency_ms })
    });
    let fip = (!res.response.sidecar.is_empty())
        .then(|| faithfulness_precision(&res.response.sidecar, &[sg], TRANSCRIPTION_TOLERANCE));
    let cfv = res
        .response
        .structured
        .as_ref()
        .filter(|b| !b.counterfactuals.is_empty())
        .map(|b| counterfactual_validity(&b.counterfactuals, &res.evidence, false));
    WindowOutcome { tag: tag.to_string(), prediction, text: res.response.text.clone(), reference, fip, cfv }
}

pub fn replay_record(record: &AuditRecord) -> Result<ReplayOutcome> {
    if record.deterministic && record.backend == TEMPLATE_ID {
        let response = generate(&record.prompt.text, &TemplateBackend)?;
        return Ok(ReplayOutcome {
            record_id: record.record_id.clone(),
            reexecuted: true,
            identical: response.text == record.response.text,
            response,
        });
    }
    Ok(ReplayOutcome {
        record_id: record.record_id.clone(),
        reexecuted: false,
        identical: true,
        response: record.response.clone(),
    })
}
