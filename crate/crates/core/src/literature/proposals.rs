//! Append-only queue of concept proposals. Each line of the JSON-lines file is a full
//! proposal record; the last record for an id is its current state.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{camel_case, storage, LiteratureError};
use crate::graph::{stable_id, Concept, ConceptStatus, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptProposal {
    pub id: String,
    pub name: String,
    pub definition: String,
    /// Suggested parent, as a concept name or slash path.
    pub parent: String,
    pub source_document: String,
    pub status: ProposalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConceptProposal {
    pub fn draft(name: &str, definition: &str, parent: &str, source_document: &str) -> Self {
        let name = camel_case(name);
        let parent = parent.trim().to_string();
        Self {
            id: stable_id(&[&name, &parent]),
            name,
            definition: definition.trim().to_string(),
            parent,
            source_document: source_document.to_string(),
            status: ProposalStatus::Pending,
            note: None,
        }
    }
}

#[derive(Debug)]
pub struct ProposalQueue {
    path: PathBuf,
    entries: BTreeMap<String, ConceptProposal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Queued {
    pub entry: ConceptProposal,
    pub duplicate: bool,
}

impl ProposalQueue {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LiteratureError> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(storage(&path))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let p: ConceptProposal = serde_json::from_str(line).map_err(|e| {
                    LiteratureError::Proposal(format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                entries.insert(p.id.clone(), p);
            }
        }
        Ok(Self { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> impl Iterator<Item = &ConceptProposal> {
        self.entries.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &ConceptProposal> {
        self.entries.values().filter(|p| p.status == ProposalStatus::Pending)
    }

    pub fn get(&self, id: &str) -> Option<&ConceptProposal> {
        self.entries.get(id)
    }

    fn append(&mut self, p: &ConceptProposal) -> Result<(), LiteratureError> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(storage(dir))?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(storage(&self.path))?;
        let line = serde_json::to_string(p).expect("proposal serializes");
        writeln!(f, "{line}").map_err(storage(&self.path))?;
        self.entries.insert(p.id.clone(), p.clone());
        Ok(())
    }

    /// Adds a pending entry, deduplicated by (name, parent). Never touches the taxonomy.
    pub fn queue(&mut self, proposal: ConceptProposal, taxonomy: &Taxonomy) -> Result<Queued, LiteratureError> {
        if proposal.name.is_empty() || proposal.definition.is_empty() || proposal.parent.is_empty() {
            return Err(LiteratureError::Proposal("proposal needs a non-empty name, definition and parent".into()));
        }
        let mut p = ConceptProposal::draft(&proposal.name, &proposal.definition, &proposal.parent, &proposal.source_document);
        if let Some(existing) = self.entries.get(&p.id) {
            return Ok(Queued { entry: existing.clone(), duplicate: true });
        }
        if taxonomy.resolve_path(&p.parent).is_none() {
            p.note = Some(format!("invalid-parent: {} is not in the taxonomy", p.parent));
        }
        self.append(&p)?;
        Ok(Queued { entry: p, duplicate: false })
    }

    /// Adds the concept under its parent and returns the new taxonomy version.
    pub fn approve(&mut self, id: &str, taxonomy: &mut Taxonomy) -> Result<u64, LiteratureError> {
        let p = self.entries.get(id).cloned().ok_or_else(|| LiteratureError::Proposal(format!("no proposal {id}")))?;
        if p.status != ProposalStatus::Pending {
            return Err(LiteratureError::Proposal(format!("proposal {id} is already {:?}", p.status)));
        }
        let parent = taxonomy
            .resolve_path(&p.parent)
            .map(|c| c.name.clone())
            .ok_or_else(|| LiteratureError::Proposal(format!("invalid-parent: {} is not in the taxonomy", p.parent)))?;
        let version = taxonomy
            .add_concept(Concept {
                name: p.name.clone(),
                label: p.name.clone(),
                definition: p.definition.clone(),
                parent: Some(parent),
                synonyms: Vec::new(),
                class: None,
                unit: None,
                ideal: None,
                status: ConceptStatus::Established,
            })
            .map_err(|e| LiteratureError::Proposal(e.to_string()))?;
        self.append(&ConceptProposal { status: ProposalStatus::Approved, note: None, ..p })?;
        Ok(version)
    }

    pub fn reject(&mut self, id: &str) -> Result<(), LiteratureError> {
        let p = self.entries.get(id).cloned().ok_or_else(|| LiteratureError::Proposal(format!("no proposal {id}")))?;
        self.append(&ConceptProposal { status: ProposalStatus::Rejected, ..p })
    }
}
