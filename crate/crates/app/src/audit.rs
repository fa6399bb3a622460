//! Append-only audit trail. Each analysis is one record under its scope key
//! (`audit/<encoded key>/<seq>.json`) next to a Turtle snapshot of the data graph it was
//! answered from (`<seq>.ttl`). Records are written with create-new semantics and never
//! rewritten.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use ssdkg_core::datakg::{frame_node, quality_node};
use ssdkg_core::graph::{parse_turtle, percent_decode, percent_encode, serialize_turtle, KnowledgeGraph, NodeId};
use ssdkg_core::reasoning::{AnalysisResponse, PromptDocument, QueryIntent};

use crate::error::{AppError, Result};

/// The six artifact kinds a complete bundle carries.
#[derive(Debug, Clone, Default)]
pub struct ArtifactBundle {
    pub frame_ids: Option<Vec<String>>,
    pub node_ids: Option<Vec<String>>,
    /// Pattern text; a comment line when retrieval was disabled or had no terms.
    pub literature_query: Option<String>,
    /// May be empty, but must be present.
    pub evidence_ids: Option<Vec<String>>,
    pub prompt: Option<PromptDocument>,
    pub response: Option<AnalysisResponse>,
}

/// What was asked and how, stored alongside the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditContext {
    pub intent: QueryIntent,
    pub windows: Vec<String>,
    pub variant: String,
    pub deterministic: bool,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub key: String,
    pub sequence: u64,
    /// `<key>#<sequence>`
    pub record_id: String,
    pub windows: Vec<String>,
    pub intent: QueryIntent,
    pub variant: String,
    pub frame_ids: Vec<String>,
    pub node_ids: Vec<String>,
    pub literature_query: String,
    pub evidence_ids: Vec<String>,
    pub prompt: PromptDocument,
    pub response: AnalysisResponse,
    pub backend: String,
    pub deterministic: bool,
    pub started_at: DateTime<Utc>,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct AuditStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn seq_name(seq: u64) -> String {
    format!("{seq:06}")
}

fn validate(bundle: ArtifactBundle) -> Result<(Vec<String>, Vec<String>, String, Vec<String>, PromptDocument, AnalysisResponse)> {
    let frame_ids = bundle.frame_ids.filter(|v| !v.is_empty()).ok_or(AppError::MissingArtifact("frame ids"))?;
    let node_ids = bundle.node_ids.filter(|v| !v.is_empty()).ok_or(AppError::MissingArtifact("data graph node ids"))?;
    let query =
        bundle.literature_query.filter(|q| !q.trim().is_empty()).ok_or(AppError::MissingArtifact("literature query"))?;
    let evidence = bundle.evidence_ids.ok_or(AppError::MissingArtifact("evidence ids"))?;
    let prompt = bundle.prompt.filter(|p| !p.text.is_empty()).ok_or(AppError::MissingArtifact("prompt"))?;
    let response = bundle.response.ok_or(AppError::MissingArtifact("response"))?;
    Ok((frame_ids, node_ids, query, evidence, prompt, response))
}

impl AuditStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), locks: Mutex::new(HashMap::new()) }
    }

    fn dir(&self, key: &str) -> PathBuf {
        self.root.join(percent_encode(key))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock map poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    fn sequences(dir: &Path) -> Result<Vec<u64>> {
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in fs::read_dir(dir).map_err(AppError::io(dir))? {
            let name = e.map_err(AppError::io(dir))?.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_suffix(".json").and_then(|s| s.parse().ok()) {
                out.push(n);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Appends a record with the next sequence number for `key`. Every frame id and node
    /// id must resolve in `snapshot`.
    pub fn record(
        &self,
        key: &str,
        bundle: ArtifactBundle,
        ctx: AuditContext,
        snapshot: &KnowledgeGraph,
    ) -> Result<AuditRecord> {
        if key.is_empty() {
            return Err(AppError::BadRequest("audit key must be non-empty".into()));
        }
        let (frame_ids, node_ids, literature_query, evidence_ids, prompt, response) = validate(bundle)?;
        for id in &node_ids {
            let node: NodeId = id.parse().map_err(|_| AppError::Unresolved(format!("node id {id}")))?;
            if !snapshot.contains_node(&node) {
                return Err(AppError::Unresolved(format!("node {id} is not in the data graph")));
            }
        }
        for f in &frame_ids {
            if !snapshot.contains_node(&frame_node(f)) && !snapshot.contains_node(&quality_node(f)) {
                return Err(AppError::Unresolved(format!("frame {f} is not in the data graph")));
            }
        }
        let turtle = serialize_turtle(snapshot).map_err(|e| AppError::Unresolved(e.to_string()))?;

        let lock = self.lock_for(key);
        let _guard = lock.lock().expect("audit key lock poisoned");
        let dir = self.dir(key);
        fs::create_dir_all(&dir).map_err(AppError::io(&dir))?;
        let sequence = Self::sequences(&dir)?.last().copied().unwrap_or(0) + 1;
        let record = AuditRecord {
            key: key.to_string(),
            sequence,
            record_id: format!("{key}#{sequence}"),
            windows: ctx.windows,
            intent: ctx.intent,
            variant: ctx.variant,
            frame_ids,
            node_ids,
            literature_query,
            evidence_ids,
            backend: response.backend.clone(),
            prompt,
            response,
            deterministic: ctx.deterministic,
            started_at: ctx.started_at,
            recorded_at: Utc::now(),
        };
        // The snapshot goes first; the record file is the commit point.
        let ttl = dir.join(format!("{}.ttl", seq_name(sequence)));
        fs::write(&ttl, turtle).map_err(AppError::io(&ttl))?;
        let path = dir.join(format!("{}.json", seq_name(sequence)));
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(AppError::io(&path))?;
        let body = serde_json::to_vec_pretty(&record).expect("record serializes");
        f.write_all(&body).map_err(AppError::io(&path))?;
        f.sync_all().map_err(AppError::io(&path))?;
        Ok(record)
    }

    pub fn get(&self, key: &str, sequence: u64) -> Result<AuditRecord> {
        let path = self.dir(key).join(format!("{}.json", seq_name(sequence)));
        if !path.exists() {
            return Err(AppError::NotFound(format!("audit record {key}#{sequence}")));
        }
        let text = fs::read_to_string(&path).map_err(AppError::io(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Corrupt { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn snapshot(&self, key: &str, sequence: u64) -> Result<KnowledgeGraph> {
        let path = self.dir(key).join(format!("{}.ttl", seq_name(sequence)));
        if !path.exists() {
            return Err(AppError::NotFound(format!("audit snapshot {key}#{sequence}")));
        }
        let text = fs::read_to_string(&path).map_err(AppError::io(&path))?;
        parse_turtle(&text).map_err(|e| AppError::Corrupt { path: path.display().to_string(), message: e.to_string() })
    }

    /// Records of one key in sequence order; empty for an unknown key.
    pub fn list(&self, key: &str) -> Result<Vec<AuditRecord>> {
        Self::sequences(&self.dir(key))?.into_iter().map(|s| self.get(key, s)).collect()
    }

    pub fn keys(&self) -> Result<Vec<String>> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in fs::read_dir(&self.root).map_err(AppError::io(&self.root))? {
            let e = e.map_err(AppError::io(&self.root))?;
            if e.path().is_dir() {
                out.push(percent_decode(&e.file_name().to_string_lossy()));
            }
        }
        out.sort();
        Ok(out)
    }
}
