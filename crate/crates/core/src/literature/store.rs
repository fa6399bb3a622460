//! Versioned collection graphs under a `litkg/` directory:
//!
//! ```text
//! litkg/versions.jsonl          one entry per materialization, append-only
//! litkg/<collection>/<v>.ttl    collection graph, a pure function of its claims
//! litkg/global.ttl              merge of the latest version of every collection
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{register_contradictions, reweight_graph, storage, Claim, ContradictionRecord, LiteratureError};
use crate::graph::turtle::{parse_turtle, serialize_turtle};
use crate::graph::{merge, AnnotationData, KnowledgeGraph, NodeId, Provenance, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub collection: String,
    pub version: u32,
    pub claims: usize,
    /// Relative to the store root; absent when no claim was accepted.
    pub file: Option<String>,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializeOutcome {
    pub entry: VersionEntry,
    pub path: Option<PathBuf>,
    pub contradictions: Vec<ContradictionRecord>,
    pub global_edges: usize,
}

fn valid_collection(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// The graph of one collection version. Retrieval weights come from `weights`
/// (claim id → multiplier), defaulting to 1.
pub fn claims_to_graph(
    claims: &[Claim],
    collection: &str,
    version: u32,
    weights: &BTreeMap<String, f64>,
) -> Result<KnowledgeGraph, LiteratureError> {
    let mut sorted: Vec<&Claim> = claims.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut g = KnowledgeGraph::new();
    for c in sorted {
        let (Some(s), Some(r), Some(o)) = (&c.subject, &c.relation, &c.object) else { continue };
        for term in c.key_terms() {
            g.add_node(term.node(), term.class.as_deref().map(NodeId::term))?;
        }
        g.annotate(
            Triple::new(s.node(), NodeId::term(r), o.node()),
            Provenance {
                document_id: c.provenance.document_id.clone(),
                evidence: c.provenance.evidence.clone(),
                collection_id: collection.to_string(),
                version,
            },
            AnnotationData {
                claim_id: c.id.clone(),
                confidence: c.confidence.unwrap_or(0.0),
                weight: weights.get(&c.id).copied().unwrap_or(1.0),
                direction: c.direction,
                context: c.context.as_ref().map(|t| t.node()),
            },
        );
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct LiteratureStore {
    root: PathBuf,
}

impl LiteratureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_path(&self) -> PathBuf {
        self.root.join("versions.jsonl")
    }

    pub fn global_path(&self) -> PathBuf {
        self.root.join("global.ttl")
    }

    pub fn versions(&self) -> Result<Vec<VersionEntry>, LiteratureError> {
        let path = self.log_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(storage(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| LiteratureError::Json(e.to_string())))
            .collect()
    }

    pub fn latest_version(&self, collection: &str) -> Result<Option<u32>, LiteratureError> {
        Ok(self.versions()?.iter().filter(|e| e.collection == collection).map(|e| e.version).max())
    }

    /// Writes `<collection>/<version>.ttl` (unless no claims) and recomputes the global graph.
    pub fn materialize(
        &self,
        accepted: &[Claim],
        collection: &str,
        version: u32,
        down_weight: f64,
    ) -> Result<MaterializeOutcome, LiteratureError> {
        if !valid_collection(collection) {
            return Err(LiteratureError::InvalidCollection(collection.to_string()));
        }
        if let Some(latest) = self.latest_version(collection)? {
            if version <= latest {
                return Err(LiteratureError::VersionRegression {
                    collection: collection.to_string(),
                    requested: version,
                    latest,
                });
            }
        }
        let outcome = register_contradictions(accepted, down_weight);
        let mut entry =
            VersionEntry { collection: collection.to_string(), version, claims: accepted.len(), file: None, sha256: None };
        let mut path = None;
        if !accepted.is_empty() {
            let g = claims_to_graph(accepted, collection, version, &outcome.weights)?;
            let text = serialize_turtle(&g)?;
            let rel = format!("{collection}/{version}.ttl");
            let p = self.root.join(&rel);
            write_atomic(&p, text.as_bytes())?;
            entry.file = Some(rel);
            entry.sha256 = Some(hex(&Sha256::digest(text.as_bytes())));
            path = Some(p);
        }
        self.append_log(&entry)?;
        let global = self.rebuild_global(down_weight)?;
        Ok(MaterializeOutcome { entry, path, contradictions: outcome.records, global_edges: global.edge_count() })
    }

    fn append_log(&self, entry: &VersionEntry) -> Result<(), LiteratureError> {
        fs::create_dir_all(&self.root).map_err(storage(&self.root))?;
        let path = self.log_path();
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(storage(&path))?;
        writeln!(f, "{}", serde_json::to_string(entry).expect("entry serializes")).map_err(storage(&path))
    }

    /// Latest file-backed version of each collection.
    pub fn latest_files(&self) -> Result<BTreeMap<String, VersionEntry>, LiteratureError> {
        let mut latest: BTreeMap<String, VersionEntry> = BTreeMap::new();
        for e in self.versions()? {
            if e.file.is_some() && latest.get(&e.collection).is_none_or(|l| l.version < e.version) {
                latest.insert(e.collection.clone(), e);
            }
        }
        Ok(latest)
    }

    pub fn collection_graph(&self, entry: &VersionEntry) -> Result<KnowledgeGraph, LiteratureError> {
        let Some(rel) = &entry.file else { return Ok(KnowledgeGraph::new()) };
        let p = self.root.join(rel);
        let text = fs::read_to_string(&p).map_err(storage(&p))?;
        Ok(parse_turtle(&text)?)
    }

    /// Merges the latest collections, reweights contradictions across them and writes
    /// `global.ttl`.
    pub fn rebuild_global(&self, down_weight: f64) -> Result<KnowledgeGraph, LiteratureError> {
        let graphs = self
            .latest_files()?
            .values()
            .map(|e| self.collection_graph(e))
            .collect::<Result<Vec<_>, _>>()?;
        let mut global = merge(graphs.iter())?;
        reweight_graph(&mut global, down_weight);
        write_atomic(&self.global_path(), serialize_turtle(&global)?.as_bytes())?;
        Ok(global)
    }

    /// The persisted global graph, or an empty graph before the first materialization.
    pub fn global(&self) -> Result<KnowledgeGraph, LiteratureError> {
        let p = self.global_path();
        if !p.exists() {
            return Ok(KnowledgeGraph::new());
        }
        let text = fs::read_to_string(&p).map_err(storage(&p))?;
        Ok(parse_turtle(&text)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LiteratureError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(storage(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(storage(&tmp))?;
    fs::rename(&tmp, path).map_err(storage(path))
}
