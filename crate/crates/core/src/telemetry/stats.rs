//! Window-scale statistics. Inputs are plain slices of observed values; callers drop
//! missing and imputed points beforehand where a statistic must not see them.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("insufficient data: need at least {needed} observed values, have {have}")]
pub struct InsufficientData {
    pub needed: usize,
    pub have: usize,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linear interpolation between closest ranks: h = (n-1)·q.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let v = sorted(values);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Raw median absolute deviation (no consistency constant).
pub fn mad(values: &[f64]) -> Option<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt())
}

/// Coefficient of variation; `None` when the mean is zero.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    (m != 0.0).then(|| std_dev(values).expect("non-empty") / m.abs())
}

/// Least-squares slope of y on x; `None` with fewer than two distinct x.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// `None` when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Autocorrelation at `lag` over a day-indexed series with gaps; only pairs where both
/// days are observed contribute to the numerator.
pub fn autocorrelation(daily: &[Option<f64>], lag: usize) -> Option<f64> {
    let obs: Vec<f64> = daily.iter().flatten().copied().collect();
    let m = mean(&obs)?;
    let denom: f64 = obs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return None;
    }
    let pairs: Vec<(f64, f64)> = daily
        .iter()
        .zip(daily.iter().skip(lag))
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    pub p: f64,
}

/// S = Σ_{i<j} sign(x_j − x_i); tie-corrected variance; continuity-corrected z;
/// two-sided normal p. All-equal input gives S = 0, p = 1.
pub fn mann_kendall(values: &[f64]) -> Result<MannKendall, InsufficientData> {
    let n = values.len();
    if n < 2 {
        return Err(InsufficientData { needed: 2, have: n });
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += match values[j].total_cmp(&values[i]) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    let v = sorted(values);
    let mut ties: i64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as i64;
        ties += t * (t - 1) * (2 * t + 5);
        i = j + 1;
    }
    let n = n as i64;
    // Integer numerator keeps the variance exact for window-scale n.
    let variance = (n * (n - 1) * (2 * n + 5) - ties) as f64 / 18.0;
    if variance <= 0.0 {
        return Ok(MannKendall { s, variance: 0.0, z: 0.0, p: 1.0 });
    }
    let z = match s.signum() {
        1 => (s - 1) as f64 / variance.sqrt(),
        -1 => (s + 1) as f64 / variance.sqrt(),
        _ => 0.0,
    };
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(MannKendall { s, variance, z, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointParams {
    pub min_segment: usize,
    /// Penalty = factor · σ̂² · ln n.
    pub penalty_factor: f64,
}

impl Default for ChangePointParams {
    fn default() -> Self {
        Self { min_segment: 3, penalty_factor: 2.0 }
    }
}

/// Noise scale from first differences: 1.4826 · MAD(Δx) / √2.
pub fn noise_sigma(values: &[f64]) -> f64 {
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    mad(&diffs).map(|m| 1.4826 * m / std::f64::consts::SQRT_2).unwrap_or(0.0)
}

struct Prefix {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(v: &[f64]) -> Self {
        let mut s1 = vec![0.0; v.len() + 1];
        let mut s2 = vec![0.0; v.len() + 1];
        for (i, x) in v.iter().enumerate() {
            s1[i + 1] = s1[i] + x;
            s2[i + 1] = s2[i] + x * x;
        }
        Self { s1, s2 }
    }

    /// Squared deviation from the mean over [a, b).
    fn sse(&self, a: usize, b: usize) -> f64 {
        let n = (b - a) as f64;
        let s = self.s1[b] - self.s1[a];
        (self.s2[b] - self.s2[a] - s * s / n).max(0.0)
    }
}

/// Binary segmentation over squared-error cost. Returns indices into `values` at which
/// a new segment starts, ascending. Fewer than 2·min_segment values gives an empty result.
pub fn change_points(values: &[f64], params: &ChangePointParams) -> Vec<usize> {
    let n = values.len();
    let m = params.min_segment.max(1);
    if n < 2 * m {
        return Vec::new();
    }
    let sigma = noise_sigma(values);
    let penalty = params.penalty_factor * sigma * sigma * (n as f64).ln();
    let prefix = Prefix::new(values);
    // Floor relative to the data scale so rounding residue never counts as signal.
    let floor = 1e-9 * (1.0 + prefix.sse(0, n));
    let mut out = Vec::new();
    let mut stack = vec![(0usize, n)];
    while let Some((a, b)) = stack.pop() {
        if b - a < 2 * m {
            continue;
        }
        let total = prefix.sse(a, b);
        let mut best: Option<(usize, f64)> = None;
        for k in a + m..=b - m {
            let gain = total - prefix.sse(a, k) - prefix.sse(k, b);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((k, gain));
            }
        }
        if let Some((k, gain)) = best {
            if gain > penalty && gain > floor {
                out.push(k);
                stack.push((a, k));
                stack.push((k, b));
            }
        }
    }
    out.sort_unstable();
    out
}
