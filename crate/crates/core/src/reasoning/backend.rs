//! Generation backends. The template backend reads only the prompt text, so its output
//! is a pure function of the prompt; the remote backend speaks a chat-completions API.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{CONTEXT_HEADER, LITERATURE_HEADER, QUERY_HEADER, SIDECAR_HEADER, SUMMARY_HEADER};
use super::rule::RiskSignals;
use super::structured::{parse_structured_block, Counterfactual, Recommendation, StructuredBlock, WindowPrediction};
use super::summary::{context_fields, risk_from_raw, SidecarClaim};
use super::{fmt_num, ReasoningError};
use crate::graph::Direction;

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> String;
    fn deterministic(&self) -> bool;
    fn generate(&self, prompt: &str) -> Result<String, ReasoningError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResponse {
    /// Backend output, verbatim.
    pub text: String,
    pub structured: Option<StructuredBlock>,
    /// No parseable structured block; excluded from prediction metrics.
    pub ungrounded: bool,
    pub parse_error: Option<String>,
    pub backend: String,
    pub sidecar: Vec<SidecarClaim>,
}

pub fn generate(prompt: &str, backend: &dyn GenerationBackend) -> Result<AnalysisResponse, ReasoningError> {
    let text = backend.generate(prompt)?;
    let (structured, parse_error) = match parse_structured_block(&text) {
        Ok(b) => (b, None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(AnalysisResponse {
        ungrounded: structured.is_none(),
        sidecar: structured.as_ref().map(|b| b.claims.clone()).unwrap_or_default(),
        structured,
        parse_error,
        backend: backend.id(),
        text,
    })
}

/// Offline rule-based backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

pub const TEMPLATE_ID: &str = "template-v1";

/// Directional relations a counterfactual may rest on.
const EFFECT_RELATIONS: [&str; 4] = ["impactsMetric", "impactsOperation", "degrades", "improves"];

#[derive(Debug, Default)]
struct WindowBlock {
    tag: Option<String>,
    context: Vec<String>,
    sentences: Vec<String>,
    claims: Vec<SidecarClaim>,
}

#[derive(Debug)]
struct Evidence {
    rank: String,
    subject: String,
    relation: String,
    object: String,
    direction: Direction,
    doc: String,
}

#[derive(Debug, Default)]
struct ParsedPrompt {
    subject: String,
    kind: String,
    perturbations: Vec<(String, f64)>,
    windows: Vec<WindowBlock>,
    evidence: Vec<Evidence>,
}

#[derive(PartialEq)]
enum Section {
    Task,
    Context,
    Literature,
    Query,
}

fn parse_prompt(prompt: &str) -> ParsedPrompt {
    let mut p = ParsedPrompt::default();
    let mut section = Section::Task;
    // 0 context lines, 1 summary sentences, 2 sidecar claims
    let mut sub = 0;
    for line in prompt.lines() {
        match line {
            CONTEXT_HEADER => {
                section = Section::Context;
                p.windows.push(WindowBlock::default());
                continue;
            }
            LITERATURE_HEADER => {
                section = Section::Literature;
                continue;
            }
            QUERY_HEADER => {
                section = Section::Query;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Task => {
                if let Some(rest) = line.strip_prefix("Task: Provide a grounded SSD analysis for ") {
                    p.subject = rest.trim_end_matches('.').to_string();
                } else if let Some(k) = line.strip_prefix("Intent: ") {
                    p.kind = k.trim().to_string();
                } else if line.starts_with("Perturbation: ") {
                    let (_, fields) = context_fields(line);
                    let get = |k: &str| fields.iter().find(|(fk, _)| fk == k).map(|(_, v)| v.clone());
                    if let (Some(f), Some(d)) = (get("factor"), get("delta").and_then(|d| d.parse().ok())) {
                        p.perturbations.push((f, d));
                    }
                }
            }
            Section::Context => {
                if let Some(tag) = line.strip_prefix("Window ").and_then(|t| t.strip_suffix(':')) {
                    if p.windows.last().is_some_and(|w| w.tag.is_some() || !w.context.is_empty()) {
                        p.windows.push(WindowBlock::default());
                    }
                    p.windows.last_mut().expect("pushed at header").tag = Some(tag.to_string());
                    sub = 0;
                    continue;
                }
                let w = p.windows.last_mut().expect("pushed at header");
                match line {
                    SUMMARY_HEADER => sub = 1,
                    SIDECAR_HEADER => sub = 2,
                    _ if sub == 1 => w.sentences.push(line.to_string()),
                    _ if sub == 2 => w.claims.extend(SidecarClaim::from_line(line.trim_start_matches("- "))),
                    _ => w.context.push(line.to_string()),
                }
            }
            Section::Literature => {
                let Some(rest) = line.strip_prefix("- [") else { continue };
                let Some((rank, rest)) = rest.split_once("] ") else { continue };
                let (head, fields) = context_fields(rest);
                let parts: Vec<&str> = head.split_whitespace().collect();
                let [s, r, o] = parts.as_slice() else { continue };
                let get = |k: &str| fields.iter().find(|(fk, _)| fk == k).map(|(_, v)| v.clone()).unwrap_or_default();
                p.evidence.push(Evidence {
                    rank: rank.to_string(),
                    subject: s.to_string(),
                    relation: r.to_string(),
                    object: o.to_string(),
                    direction: get("direction").parse().unwrap_or_default(),
                    doc: get("doc"),
                });
            }
            Section::Query => {}
        }
    }
    p
}

fn risk_of(w: &WindowBlock) -> RiskSignals {
    if w.context.iter().any(|l| l.contains(" raw daily: ")) {
        return risk_from_raw(&w.context);
    }
    let mut out = RiskSignals::default();
    for line in &w.context {
        let (head, fields) = context_fields(line);
        let num = |k: &str| fields.iter().find(|(fk, _)| fk == k).and_then(|(_, v)| v.parse::<f64>().ok());
        match head.split_whitespace().next() {
            Some("r_187") => {
                out.r187_mk_s = num("mk_s");
                out.r187_mk_p = num("mk_p");
                out.slopes.extend(num("slope"));
            }
            Some("r_5") => {
                out.r5_exposure_days = num("exposure_days");
                out.slopes.extend(num("slope"));
            }
            _ => {}
        }
    }
    out
}

fn risk_reason(r: &RiskSignals) -> String {
    let mut why = Vec::new();
    if let (Some(s), Some(p)) = (r.r187_mk_s, r.r187_mk_p) {
        if s > 0.0 && p < super::rule::TREND_ALPHA {
            why.push(format!("r_187 rises significantly (Mann-Kendall S={}, p={})", fmt_num(s), fmt_num(p)));
        }
    }
    if let Some(d) = r.r5_exposure_days.filter(|d| *d >= super::rule::EXPOSURE_MIN_DAYS) {
        why.push(format!("r_5 exceeded its threshold on {} days", fmt_num(d)));
    }
    why.join(" and ")
}

impl TemplateBackend {
    fn render(&self, prompt: &str) -> String {
        let p = parse_prompt(prompt);
        let cohort = p.windows.len() > 1 || p.windows.first().is_some_and(|w| w.tag.is_some());
        let mut out = vec![format!("Grounded {} analysis for {}.", if p.kind.is_empty() { "descriptive" } else { &p.kind }, p.subject)];
        let mut block = StructuredBlock::default();

        out.push("Observations:".into());
        for w in &p.windows {
            let prefix = w.tag.as_ref().map(|t| format!("{t}: ")).unwrap_or_default();
            if w.sentences.is_empty() {
                let what = if w.context.iter().any(|l| l.contains(" raw daily: ")) {
                    "raw daily values only; no frame summary was provided"
                } else {
                    "no salient trend, threshold exposure, change point or spike"
                };
                out.push(format!("- {prefix}{what}."));
            }
            for s in &w.sentences {
                out.push(format!("- {prefix}{s}"));
            }
            block.claims.extend(w.claims.iter().cloned());
        }

        out.push("Risk:".into());
        let mut any_fail = false;
        for w in &p.windows {
            let risk = risk_of(w);
            let fail = risk.fail_flag();
            any_fail |= fail;
            let ttf = risk.ttf_days();
            let prefix = w.tag.as_ref().map(|t| format!("{t}: ")).unwrap_or_default();
            if fail {
                out.push(format!(
                    "- {prefix}failure rule fires because {}; estimated time to failure {} days from the window end (inverse-slope heuristic).",
                    risk_reason(&risk),
                    fmt_num(ttf.expect("fires"))
                ));
            } else {
                out.push(format!("- {prefix}failure rule does not fire; no significant r_187 rise and r_5 exposure below 3 days."));
            }
            if cohort {
                block.predictions.push(WindowPrediction { tag: w.tag.clone().unwrap_or_default(), fail_flag: fail, ttf_days: ttf });
            } else {
                block.fail_flag = Some(fail);
                block.ttf_days = ttf;
            }
        }

        out.push("Literature:".into());
        if p.evidence.is_empty() {
            out.push("- no literature evidence retrieved; conclusions rest on telemetry alone.".into());
        }
        for e in p.evidence.iter().take(5) {
            out.push(format!(
                "- [{}] {} {} {} ({}; {}).",
                e.rank,
                e.subject,
                e.relation,
                e.object,
                e.direction.as_str(),
                e.doc
            ));
        }

        if p.kind == "what-if" {
            out.push("What-if:".into());
            for (factor, delta) in &p.perturbations {
                let mut seen = BTreeSet::new();
                let mut any = false;
                for e in &p.evidence {
                    if &e.subject != factor
                        || !EFFECT_RELATIONS.contains(&e.relation.as_str())
                        || e.direction == Direction::Neutral
                        || !seen.insert(e.object.clone())
                    {
                        continue;
                    }
                    let dir = Direction::from_sign(delta.signum() as i32 * e.direction.sign());
                    out.push(format!(
                        "- changing {factor} by {} is expected to {} {} per [{}].",
                        fmt_num(*delta),
                        if dir == Direction::Improves { "improve" } else { "degrade" },
                        e.object,
                        e.rank
                    ));
                    block.counterfactuals.push(Counterfactual {
                        factor: factor.clone(),
                        delta: *delta,
                        metric: e.object.clone(),
                        direction: dir,
                    });
                    any = true;
                }
                if !any {
                    out.push(format!("- no directional literature evidence links {factor} to a metric; no prediction made."));
                }
            }
        }

        if p.kind == "prescriptive" {
            out.push("Recommendations:".into());
            let mut seen = BTreeSet::new();
            for e in p.evidence.iter().filter(|e| e.relation == "mitigatedBy") {
                if !seen.insert(e.object.clone()) {
                    continue;
                }
                out.push(format!("- {} to improve {} per [{}].", e.object, e.subject, e.rank));
                block.recommendations.push(Recommendation {
                    action: e.object.clone(),
                    metric: e.subject.clone(),
                    direction: Direction::Improves,
                });
            }
            if block.recommendations.is_empty() && any_fail {
                out.push("- DataMigration to protect data from further UncorrectableErrors (rule fallback, no literature).".into());
                block.recommendations.push(Recommendation {
                    action: "DataMigration".into(),
                    metric: "UncorrectableErrors".into(),
                    direction: Direction::Improves,
                });
            }
            if block.recommendations.is_empty() {
                out.push("- none needed.".into());
            }
        }

        out.push(block.render());
        out.join("\n") + "\n"
    }
}

impl GenerationBackend for TemplateBackend {
    fn id(&self) -> String {
        TEMPLATE_ID.to_string()
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn generate(&self, prompt: &str) -> Result<String, ReasoningError> {
        Ok(self.render(prompt))
    }
}

/// Chat-completions backend configured from `SSDKG_BACKEND_URL`, `SSDKG_BACKEND_MODEL`
/// and `SSDKG_BACKEND_KEY`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub url: String,
    pub model: String,
    pub key: Option<String>,
    pub timeout: Duration,
}

impl RemoteBackend {
    pub fn from_env() -> Result<Self, ReasoningError> {
        let url = std::env::var("SSDKG_BACKEND_URL").map_err(|_| ReasoningError::Backend {
            backend: "remote".into(),
            message: "SSDKG_BACKEND_URL is not set".into(),
        })?;
        Ok(Self {
            url,
            model: std::env::var("SSDKG_BACKEND_MODEL").unwrap_or_else(|_| "default".into()),
            key: std::env::var("SSDKG_BACKEND_KEY").ok(),
            timeout: Duration::from_secs(120),
        })
    }
}

impl GenerationBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn generate(&self, prompt: &str) -> Result<String, ReasoningError> {
        let fail = |message: String| ReasoningError::Backend { backend: self.id(), message };
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = agent.post(&self.url);
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| fail(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| fail(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| fail("response has no choices[0].message.content".into()))
    }
}
