//! Reference-overlap metrics over a single shared tokenizer.

use std::collections::HashMap;

/// Lowercases and splits on whitespace and punctuation; each punctuation character is
/// its own token. A `.` or `,` between two digits stays inside the number.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let numeric_sep = matches!(c, '.' | ',')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || c == '_' || numeric_sep {
            cur.extend(c.to_lowercase());
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramScore {
    /// Modified precisions p_1..p_4; p_2..p_4 add-one smoothed.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub score: f64,
}

/// Sentence BLEU-4 with uniform weights. Add-one smoothing applies to n ≥ 2, so a
/// candidate with no unigram overlap scores 0.
pub fn bleu4(candidate: &str, reference: &str) -> NgramScore {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() {
        return NgramScore { precisions: [0.0; 4], brevity_penalty: 0.0, score: 0.0 };
    }
    let mut precisions = [0.0; 4];
    for n in 1..=4 {
        let cand = ngram_counts(&c, n);
        let refc = ngram_counts(&r, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(g, k)| (*k).min(refc.get(g).copied().unwrap_or(0))).sum();
        precisions[n - 1] = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
    }
    let brevity_penalty = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    let score = if precisions[0] == 0.0 {
        0.0
    } else {
        brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
    };
    NgramScore { precisions, brevity_penalty, score }
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS F1 (β = 1). `None` when both texts are empty.
pub fn rouge_l(candidate: &str, reference: &str) -> Option<f64> {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() && r.is_empty() {
        return None;
    }
    let l = lcs_len(&c, &r);
    if l == 0 {
        return Some(0.0);
    }
    let (p, rec) = (l as f64 / c.len() as f64, l as f64 / r.len() as f64);
    Some(2.0 * p * rec / (p + rec))
}
