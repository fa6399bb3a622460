//! Prediction, text-overlap and grounding metrics, aggregated into a report.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod grounding;
pub mod text;

pub use grounding::{
    counterfactual_validity, faithfulness_precision, judge_counterfactual, verify_claim, ClaimVerdict,
    CounterfactualVerdict, FREE_TEXT_TOLERANCE, TRANSCRIPTION_TOLERANCE,
};
pub use text::{bleu4, rouge_l, tokenize, NgramScore};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and label keys differ: no label for {no_label:?}, no prediction for {no_prediction:?}")]
    KeyMismatch { no_label: Vec<String>, no_prediction: Vec<String> },
    #[error("mean squared error of an empty set")]
    Empty,
    #[error("csv error: {0}")]
    Csv(String),
}

/// A ratio that is null when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub numerator: usize,
    pub denominator: usize,
    pub value: Option<f64>,
}

impl Rate {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        let value = (denominator > 0).then(|| numerator as f64 / denominator as f64);
        Self { numerator, denominator, value }
    }

    /// Micro-average: sums numerators and denominators.
    pub fn combine<'a>(rates: impl IntoIterator<Item = &'a Rate>) -> Rate {
        let (n, d) = rates.into_iter().fold((0, 0), |(n, d), r| (n + r.numerator, d + r.denominator));
        Rate::new(n, d)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub counts: ConfusionCounts,
    pub precision: Rate,
    pub recall: Rate,
    pub accuracy: Rate,
}

impl Classification {
    pub fn from_counts(c: ConfusionCounts) -> Self {
        Self {
            counts: c,
            precision: Rate::new(c.tp, c.tp + c.fp),
            recall: Rate::new(c.tp, c.tp + c.fn_),
            accuracy: Rate::new(c.tp + c.tn, c.total()),
        }
    }
}

/// Keys must match exactly.
pub fn classification_metrics(
    predictions: &BTreeMap<String, bool>,
    labels: &BTreeMap<String, bool>,
) -> Result<Classification, EvalError> {
    check_keys(predictions.keys(), labels.keys())?;
    let mut c = ConfusionCounts::default();
    for (k, p) in predictions {
        c.add(*p, labels[k]);
    }
    Ok(Classification::from_counts(c))
}

fn check_keys<'a>(
    predicted: impl Iterator<Item = &'a String>,
    labelled: impl Iterator<Item = &'a String>,
) -> Result<(), EvalError> {
    let p: BTreeSet<&String> = predicted.collect();
    let l: BTreeSet<&String> = labelled.collect();
    if p == l {
        return Ok(());
    }
    Err(EvalError::KeyMismatch {
        no_label: p.difference(&l).map(|s| s.to_string()).collect(),
        no_prediction: l.difference(&p).map(|s| s.to_string()).collect(),
    })
}

/// Pairs are (predicted, actual).
pub fn mean_squared_error(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pairs.iter().map(|(p, a)| (p - a).powi(2)).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub tag: String,
    pub fail: bool,
    /// Days from the window end to failure; only set when `fail`.
    pub ttf_days: Option<f64>,
    pub tail_latency_ms: Option<f64>,
}

/// Positive iff the drive fails within `horizon_days` after the window end.
pub fn label_window(tag: &str, window_end: NaiveDate, failure: Option<NaiveDate>, horizon_days: i64) -> LabelRecord {
    let ttf = failure.map(|f| (f - window_end).num_days()).filter(|d| *d > 0 && *d <= horizon_days);
    LabelRecord { tag: tag.to_string(), fail: ttf.is_some(), ttf_days: ttf.map(|d| d as f64), tail_latency_ms: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fail: bool,
    pub ttf_days: Option<f64>,
    pub tail_latency_ms: Option<f64>,
}

/// One evaluated window. `prediction` is `None` for ungrounded responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub tag: String,
    pub prediction: Option<PredictionRecord>,
    pub text: String,
    pub reference: Option<String>,
    pub fip: Option<Rate>,
    pub cfv: Option<Rate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValue {
    pub value: Option<f64>,
    pub n: usize,
}

impl MeanValue {
    fn of(xs: &[f64]) -> Self {
        let value = (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        Self { value, n: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub tag: String,
    pub label_fail: bool,
    pub predicted_fail: Option<bool>,
    pub label_ttf: Option<f64>,
    pub predicted_ttf: Option<f64>,
    pub bleu4: Option<f64>,
    pub rouge_l: Option<f64>,
    pub fip: Option<f64>,
    pub cfv: Option<f64>,
    pub ungrounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub windows: usize,
    pub evaluated: usize,
    pub ungrounded: usize,
    pub confusion: ConfusionCounts,
    pub precision: Rate,
    pub recall: Rate,
    pub accuracy: Rate,
    /// days²
    pub mse_ttf: MeanValue,
    /// ms²
    pub mse_tl: MeanValue,
    pub bleu4: MeanValue,
    pub rouge_l: MeanValue,
    pub fip: Rate,
    pub cfv: Rate,
    pub per_window: Vec<WindowScore>,
}

/// Ungrounded windows are excluded from P/R/A and the MSEs but counted.
pub fn build_report(labels: &BTreeMap<String, LabelRecord>, outcomes: &[WindowOutcome]) -> Result<MetricsReport, EvalError> {
    check_keys(outcomes.iter().map(|o| &o.tag), labels.keys())?;
    let mut confusion = ConfusionCounts::default();
    let (mut ttf_pairs, mut tl_pairs, mut b4, mut rl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut per_window = Vec::new();
    for o in outcomes {
        let label = &labels[&o.tag];
        let mut score = WindowScore {
            tag: o.tag.clone(),
            label_fail: label.fail,
            predicted_fail: o.prediction.as_ref().map(|p| p.fail),
            label_ttf: label.ttf_days,
            predicted_ttf: o.prediction.as_ref().and_then(|p| p.ttf_days),
            bleu4: None,
            rouge_l: None,
            fip: o.fip.and_then(|r| r.value),
            cfv: o.cfv.and_then(|r| r.value),
            ungrounded: o.prediction.is_none(),
        };
        if let Some(p) = &o.prediction {
            confusion.add(p.fail, label.fail);
            if let (true, Some(a), Some(e)) = (label.fail, label.ttf_days, p.ttf_days) {
                ttf_pairs.push((e, a));
            }
            if let (Some(a), Some(e)) = (label.tail_latency_ms, p.tail_latency_ms) {
                tl_pairs.push((e, a));
            }
        }
        if let Some(r) = &o.reference {
            let b = bleu4(&o.text, r).score;
            b4.push(b);
            score.bleu4 = Some(b);
            if let Some(x) = rouge_l(&o.text, r) {
                rl.push(x);
                score.rouge_l = Some(x);
            }
        }
        per_window.push(score);
    }
    let cls = Classification::from_counts(confusion);
    let mse = |pairs: &[(f64, f64)]| MeanValue { value: mean_squared_error(pairs).ok(), n: pairs.len() };
    let evaluated = confusion.total();
    Ok(MetricsReport {
        windows: outcomes.len(),
        evaluated,
        ungrounded: outcomes.len() - evaluated,
        confusion,
        precision: cls.precision,
        recall: cls.recall,
        accuracy: cls.accuracy,
        mse_ttf: mse(&ttf_pairs),
        mse_tl: mse(&tl_pairs),
        bleu4: MeanValue::of(&b4),
        rouge_l: MeanValue::of(&rl),
        fip: Rate::combine(outcomes.iter().filter_map(|o| o.fip.as_ref())),
        cfv: Rate::combine(outcomes.iter().filter_map(|o| o.cfv.as_ref())),
        per_window,
    })
}

fn show(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "null".into())
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let rate = |r: &Rate| format!("{:<8} ({}/{})", show(r.value), r.numerator, r.denominator);
        let mean = |m: &MeanValue| format!("{:<8} (n={})", show(m.value), m.n);
        let c = &self.confusion;
        let rows = [
            ("P", rate(&self.precision)),
            ("R", rate(&self.recall)),
            ("A", rate(&self.accuracy)),
            ("TTF-MSE (days^2)", mean(&self.mse_ttf)),
            ("TL-MSE (ms^2)", mean(&self.mse_tl)),
            ("B4", mean(&self.bleu4)),
            ("RL", mean(&self.rouge_l)),
            ("FiP", rate(&self.fip)),
            ("CFV", rate(&self.cfv)),
            ("confusion", format!("TP={} FP={} FN={} TN={}", c.tp, c.fp, c.fn_, c.tn)),
            ("windows", format!("{} evaluated, {} ungrounded", self.evaluated, self.ungrounded)),
        ];
        rows.iter().map(|(k, v)| format!("{k:<18} {v}\n")).collect()
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| EvalError::Csv(e.to_string());
        w.write_record(["tag", "label_fail", "predicted_fail", "label_ttf", "predicted_ttf", "bleu4", "rouge_l", "fip", "cfv", "ungrounded"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.per_window {
            w.write_record([
                s.tag.clone(),
                s.label_fail.to_string(),
                s.predicted_fail.map(|b| b.to_string()).unwrap_or_default(),
                opt(s.label_ttf),
                opt(s.predicted_ttf),
                opt(s.bleu4),
                opt(s.rouge_l),
                opt(s.fip),
                opt(s.cfv),
                s.ungrounded.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}
