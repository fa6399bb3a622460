//! Prompt assembly. Section order is fixed: task header, data graph context, retrieved
//! literature, user query. Only the literature section is truncated to fit the budget.

use serde::{Deserialize, Serialize};

use super::evidence::EvidenceItem;
use super::summary::GroundedSummary;
use super::{fmt_num, QueryIntent, ReasoningError};

pub const CONTEXT_HEADER: &str = "Data KG context (auditable):";
pub const LITERATURE_HEADER: &str = "Retrieved literature (if available):";
pub const QUERY_HEADER: &str = "User query:";
pub const SUMMARY_HEADER: &str = "Summary:";
pub const SIDECAR_HEADER: &str = "Sidecar claims:";
pub const NO_EVIDENCE: &str = "- no literature evidence retrieved";
pub const DEFAULT_TOKEN_BUDGET: usize = 3000;
pub const DEFAULT_COHORT_TOP_K: usize = 10;

const FORMAT_INSTRUCTIONS: &str = "Response format: cite literature as [rank] and data claims by sidecar id; \
state units and windows; end with a block between BEGIN_STRUCTURED and END_STRUCTURED holding fail_flag=true|false, \
ttf_days=<days from the window end or none>, optional tail_latency_ms=<ms>, \
counterfactual=factor|delta|metric|direction lines for what-if questions, \
recommendation=action|metric|direction lines for prescriptive questions, \
claim= lines copied verbatim from the sidecar claims you rely on, and for cohorts one prediction=tag|fail|ttf line per window.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Whitespace-delimited tokens.
    pub token_budget: usize,
    pub max_evidence: Option<usize>,
    pub cohort_top_k: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { token_budget: DEFAULT_TOKEN_BUDGET, max_evidence: None, cohort_top_k: DEFAULT_COHORT_TOP_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub task: Vec<String>,
    pub context: Vec<String>,
    pub literature: Vec<String>,
    pub query: Vec<String>,
    /// Window tags included, in prompt order.
    pub windows: Vec<String>,
    pub token_budget: usize,
    pub tokens: usize,
    pub evidence_total: usize,
    pub evidence_included: usize,
    pub truncated: bool,
    /// The fixed sections alone exceed the budget.
    pub over_budget: bool,
    pub text: String,
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn evidence_line(e: &EvidenceItem) -> String {
    format!(
        "- [{}] {} {} {}: direction={}, context={}, confidence={}, weight={}, score={}, doc={}, claim={}, evidence=\"{}\"",
        e.rank,
        e.subject,
        e.relation,
        e.object,
        e.direction.as_str(),
        e.context.as_deref().unwrap_or("none"),
        fmt_num(e.confidence),
        fmt_num(e.weight),
        fmt_num(e.score),
        e.document_id,
        e.id(),
        e.evidence.replace('"', "'"),
    )
}

fn window_block(s: &GroundedSummary, claim_prefix: &str) -> Vec<String> {
    let mut out = s.context.clone();
    if !s.sentences.is_empty() {
        out.push(SUMMARY_HEADER.to_string());
        out.extend(s.sentences.iter().cloned());
    }
    if !s.sidecar.is_empty() {
        out.push(SIDECAR_HEADER.to_string());
        for c in &s.sidecar {
            let mut c = c.clone();
            c.claim_id = format!("{claim_prefix}{}", c.claim_id);
            out.push(format!("- {}", c.to_line()));
        }
    }
    out
}

/// Pre: at least one summary. Cohorts keep the `cohort_top_k` windows with the highest
/// rule score; claim ids in a cohort are prefixed `w<i>.`.
pub fn assemble_prompt(
    intent: &QueryIntent,
    summaries: &[GroundedSummary],
    evidence: &[EvidenceItem],
    opts: &PromptOptions,
) -> Result<PromptDocument, ReasoningError> {
    if summaries.is_empty() {
        return Err(ReasoningError::EmptySubgraph("no window summary to prompt with".into()));
    }
    let mut task = Vec::new();
    let mut context = vec![CONTEXT_HEADER.to_string()];
    let chosen: Vec<&GroundedSummary> = if summaries.len() == 1 {
        let s = &summaries[0];
        task.push(format!("Task: Provide a grounded SSD analysis for {} over window {}.", s.drive_id, s.window));
        context.extend(window_block(s, ""));
        vec![s]
    } else {
        let mut ranked: Vec<&GroundedSummary> = summaries.iter().collect();
        ranked.sort_by(|a, b| b.risk.score().total_cmp(&a.risk.score()).then_with(|| a.tag.cmp(&b.tag)));
        ranked.truncate(opts.cohort_top_k.max(1));
        task.push(format!(
            "Task: Provide a grounded SSD analysis for a cohort of {} windows (top {} of {} by rule score).",
            ranked.len(),
            ranked.len(),
            summaries.len()
        ));
        for (i, s) in ranked.iter().enumerate() {
            context.push(format!("Window {}:", s.tag));
            context.extend(window_block(s, &format!("w{}.", i + 1)));
        }
        ranked
    };
    task.push(format!("Intent: {}", intent.kind));
    for p in &intent.perturbations {
        task.push(format!(
            "Perturbation: factor={}, delta={}, unit={}",
            p.factor,
            fmt_num(p.delta),
            p.unit.as_deref().unwrap_or("native")
        ));
    }
    task.push(FORMAT_INSTRUCTIONS.to_string());
    let query = vec![QUERY_HEADER.to_string(), format!("\"{}\"", intent.question.replace('"', "'"))];

    let fixed: usize = [&task, &context, &query].iter().flat_map(|s| s.iter()).map(|l| count_tokens(l)).sum::<usize>()
        + count_tokens(LITERATURE_HEADER);
    let mut literature = vec![LITERATURE_HEADER.to_string()];
    let mut used = fixed;
    let cap = opts.max_evidence.unwrap_or(usize::MAX);
    let mut sizes = Vec::new();
    for e in evidence.iter().take(cap) {
        let line = evidence_line(e);
        let n = count_tokens(&line);
        if used + n > opts.token_budget {
            break;
        }
        used += n;
        sizes.push(n);
        literature.push(line);
    }
    let note = |k: usize| {
        format!(
            "- (truncated: showing {k} of {} evidence items by rank to fit a budget of {} tokens)",
            evidence.len(),
            opts.token_budget
        )
    };
    // Drop lowest-ranked lines until the truncation note fits too.
    while sizes.len() < evidence.len() && !sizes.is_empty() && used + count_tokens(&note(sizes.len())) > opts.token_budget {
        used -= sizes.pop().expect("non-empty");
        literature.pop();
    }
    let included = sizes.len();
    let truncated = included < evidence.len();
    if evidence.is_empty() {
        literature.push(NO_EVIDENCE.to_string());
    } else if truncated {
        literature.push(note(included));
    }
    let text = [&task, &context, &literature, &query].iter().flat_map(|s| s.iter().cloned()).collect::<Vec<_>>().join("\n")
        + "\n";
    Ok(PromptDocument {
        windows: chosen.iter().map(|s| s.tag.clone()).collect(),
        tokens: count_tokens(&text),
        task,
        context,
        literature,
        query,
        token_budget: opts.token_budget,
        evidence_total: evidence.len(),
        evidence_included: included,
        truncated,
        over_budget: fixed > opts.token_budget,
        text,
    })
}
