//! Evidence retrieval, grounded summaries, prompt assembly and generation backends.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod backend;
pub mod evidence;
pub mod prompt;
pub mod rule;
pub mod structured;
pub mod summary;

pub use backend::{generate, AnalysisResponse, GenerationBackend, RemoteBackend, TemplateBackend};
pub use evidence::{build_evidence_query, rank_evidence, retrieve, vocabulary_terms, EvidenceItem, EvidenceQuery};
pub use prompt::{assemble_prompt, PromptDocument, PromptOptions};
pub use rule::RiskSignals;
pub use structured::{parse_structured_block, Counterfactual, Recommendation, StructuredBlock};
pub use summary::{raw_log_context, summarize_subgraph, GroundedSummary, SidecarClaim};

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("evidence query needs at least one vocabulary term")]
    NoTerms,
    #[error("invalid query intent: {0}")]
    InvalidIntent(String),
    #[error("cannot summarize: {0}")]
    EmptySubgraph(String),
    #[error("query error: {0}")]
    Query(#[from] crate::graph::query::QueryError),
    #[error("backend {backend} failed: {message}")]
    Backend { backend: String, message: String },
    #[error("structured block invalid: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    Descriptive,
    Predictive,
    Prescriptive,
    WhatIf,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [QueryKind::Descriptive, QueryKind::Predictive, QueryKind::Prescriptive, QueryKind::WhatIf];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Descriptive => "descriptive",
            QueryKind::Predictive => "predictive",
            QueryKind::Prescriptive => "prescriptive",
            QueryKind::WhatIf => "what-if",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = ReasoningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ReasoningError::InvalidIntent(format!("unknown query kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Window(String),
    Cohort(Vec<String>),
}

impl Scope {
    pub fn tags(&self) -> Vec<String> {
        match self {
            Scope::Window(t) => vec![t.clone()],
            Scope::Cohort(ts) => ts.clone(),
        }
    }
}

/// A what-if change of one factor, in the factor's unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Canonical taxonomy concept name.
    pub factor: String,
    pub delta: f64,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryIntent {
    pub kind: QueryKind,
    pub question: String,
    pub scope: Scope,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

impl QueryIntent {
    pub fn new(kind: QueryKind, question: &str, scope: Scope, perturbations: Vec<Perturbation>) -> Result<Self, ReasoningError> {
        let intent = Self { kind, question: question.to_string(), scope, perturbations };
        intent.validate()?;
        Ok(intent)
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        if self.kind == QueryKind::WhatIf && self.perturbations.is_empty() {
            return Err(ReasoningError::InvalidIntent("a what-if query must name at least one perturbed factor".into()));
        }
        if let Scope::Cohort(tags) = &self.scope {
            if tags.is_empty() {
                return Err(ReasoningError::InvalidIntent("cohort scope needs at least one window".into()));
            }
        }
        if let Some(p) = self.perturbations.iter().find(|p| !p.delta.is_finite() || p.delta == 0.0) {
            return Err(ReasoningError::InvalidIntent(format!("perturbation of {} needs a finite non-zero delta", p.factor)));
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same f64; exponent form outside
/// [1e-4, 1e15).
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if !(1e-4..1e15).contains(&a) && a.is_finite() {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -0.0, 1.0, 0.1 + 0.2, 4.161271222378666e-13, 1e300, -2.5e-7, 123456.0, 1e15] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x, "{}", fmt_num(x));
        }
        assert_eq!(fmt_num(4.5e-13), "4.5e-13");
        assert_eq!(fmt_num(25.0), "25");
    }
}
