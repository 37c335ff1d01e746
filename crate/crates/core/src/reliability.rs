//! Isotonic calibration, reliability diagrams and MC-dropout spread
//! statistics.

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{MetricsError, PredictionSet, Record};
use crate::rng::RandomStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("isotonic fit needs both classes; got {positives} positives and {negatives} negatives")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("isotonic fit needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("could not split {n} samples into halves containing both classes after {attempts} attempts")]
    SplitInfeasible { n: usize, attempts: usize },
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("probability matrix: {0}")]
    BadMatrix(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Non-decreasing step function fitted by pool-adjacent-violators.
///
/// `breakpoints` are the distinct training scores. Evaluation at `s` takes
/// the value of the first breakpoint `>= s`, clamped to the last one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotonicModel {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicModel {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, score: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b < score);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Weighted pool-adjacent-violators on pre-sorted `(value, weight)` pairs.
/// Returns one fitted value per input.
pub fn pav(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    // blocks of (weighted sum, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi * wi, wi, 1));
        while blocks.len() > 1 {
            let (s1, w1, _) = blocks[blocks.len() - 1];
            let (s0, w0, _) = blocks[blocks.len() - 2];
            if s0 / w0 <= s1 / w1 {
                break;
            }
            let (_, _, n1) = blocks.pop().unwrap();
            let last = blocks.last_mut().unwrap();
            *last = (s0 + s1, w0 + w1, last.2 + n1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, w, n)| std::iter::repeat_n(s / w, n))
        .collect()
}

pub fn isotonic_fit(p: &PredictionSet) -> Result<IsotonicModel, ReliabilityError> {
    if p.len() < 2 {
        return Err(ReliabilityError::TooFewSamples(p.len()));
    }
    let pos = p.positives();
    if pos == 0 || pos == p.len() {
        return Err(ReliabilityError::OneClassOnly {
            positives: pos,
            negatives: p.len() - pos,
        });
    }
    let mut pairs: Vec<(f64, u8)> = p.records().iter().map(|r| (r.score, r.label)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut breakpoints = Vec::new();
    let mut means = Vec::new();
    let mut weights = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        let mut j = i;
        let mut hits = 0u64;
        while j < pairs.len() && pairs[j].0 == s {
            hits += pairs[j].1 as u64;
            j += 1;
        }
        let n = (j - i) as f64;
        breakpoints.push(s);
        means.push(hits as f64 / n);
        weights.push(n);
        i = j;
    }
    let values = pav(&means, &weights);
    Ok(IsotonicModel { breakpoints, values })
}

pub fn isotonic_apply(m: &IsotonicModel, score: f64) -> f64 {
    m.apply(score)
}

pub const SPLIT_ATTEMPTS: usize = 100;

/// Random half split: the model is fitted on the first `floor(n/2)` samples
/// of a permutation and applied to the rest. Only the second half is
/// returned, in permutation order.
pub fn calibrate_split(
    p: &PredictionSet,
    rng: &mut RandomStream,
) -> Result<(PredictionSet, IsotonicModel), ReliabilityError> {
    let n = p.len();
    let fail = ReliabilityError::SplitInfeasible {
        n,
        attempts: SPLIT_ATTEMPTS,
    };
    let pos = p.positives();
    if n < 4 || pos < 2 || n - pos < 2 {
        return Err(fail);
    }
    let half = n / 2;
    let records = p.records();
    let has_both = |idx: &[usize]| {
        let k = idx.iter().filter(|&&i| records[i].label == 1).count();
        k > 0 && k < idx.len()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..SPLIT_ATTEMPTS {
        rng.shuffle(&mut perm);
        let (a, b) = perm.split_at(half);
        if !(has_both(a) && has_both(b)) {
            continue;
        }
        let train = PredictionSet::new(a.iter().map(|&i| records[i].clone()).collect())?;
        let model = isotonic_fit(&train)?;
        let out = b
            .iter()
            .map(|&i| Record {
                score: model.apply(records[i].score),
                ..records[i].clone()
            })
            .collect();
        return Ok((PredictionSet::new(out)?, model));
    }
    Err(fail)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    /// `None` for empty bins.
    pub mean_pred: Option<f64>,
    pub pos_rate: Option<f64>,
    pub count: usize,
}

/// Equal-width bins on `[0, 1]`; bin `i` is `[i/n, (i+1)/n)` except the last,
/// which is closed on the right.
pub fn reliability_bins(p: &PredictionSet, n_bins: usize) -> Result<Vec<ReliabilityBin>, ReliabilityError> {
    if n_bins < 2 {
        return Err(ReliabilityError::TooFewBins(n_bins));
    }
    let mut sums = vec![(0.0f64, 0u64, 0usize); n_bins];
    for r in p.records() {
        let b = ((r.score * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b].0 += r.score;
        sums[b].1 += r.label as u64;
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (s, k, n))| ReliabilityBin {
            lo: i as f64 / n_bins as f64,
            hi: (i + 1) as f64 / n_bins as f64,
            mean_pred: (n > 0).then(|| s / n as f64),
            pos_rate: (n > 0).then(|| k as f64 / n as f64),
            count: n,
        })
        .collect())
}

/// Binned calibration error: `sum_b (n_b / n) |mean_pred_b - pos_rate_b|`.
pub fn expected_calibration_error(p: &PredictionSet, n_bins: usize) -> Result<f64, ReliabilityError> {
    let bins = reliability_bins(p, n_bins)?;
    let n = p.len().max(1) as f64;
    Ok(bins
        .iter()
        .filter_map(|b| Some(b.count as f64 / n * (b.mean_pred? - b.pos_rate?).abs()))
        .sum())
}

/// Repeated stochastic predictions: one row per sample, `t` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    ids: Vec<String>,
    labels: Vec<u8>,
    t: usize,
    values: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(ids: Vec<String>, labels: Vec<u8>, t: usize, values: Vec<f64>) -> Result<Self, ReliabilityError> {
        let bad = |m: String| Err(ReliabilityError::BadMatrix(m));
        if t < 2 {
            return bad(format!("need at least 2 columns, got {t}"));
        }
        if ids.len() != labels.len() || values.len() != ids.len() * t {
            return bad(format!(
                "{} ids, {} labels and {} values do not form {} columns",
                ids.len(),
                labels.len(),
                values.len(),
                t
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return bad(format!("label {l} is not 0 or 1"));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return bad(format!("value {} in row {} outside [0, 1]", values[i], i / t));
        }
        Ok(Self { ids, labels, t, values })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn columns(&self) -> usize {
        self.t
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.t..(i + 1) * self.t]
    }
}

/// Per-sample spread measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spread {
    /// Population standard deviation across columns.
    #[default]
    Std,
    /// `max - min` across columns.
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub id: String,
    pub label: u8,
    pub mean: f64,
    pub std: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassSpread {
    pub count: usize,
    pub mean_spread: f64,
    pub std_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutStats {
    pub spread: Spread,
    pub samples: Vec<SampleStats>,
    /// Indexed by label.
    pub classes: [ClassSpread; 2],
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    // Shifted by the first value so constant input gives exactly (x, 0).
    let n = xs.len() as f64;
    let k = xs[0];
    let mean = k + xs.iter().map(|x| x - k).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn mc_dropout_stats(m: &ProbMatrix, spread: Spread) -> DropoutStats {
    let samples: Vec<SampleStats> = (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let (mean, std) = mean_std(row);
            let s = match spread {
                Spread::Std => std,
                Spread::Range => {
                    let (lo, hi) = row
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                    hi - lo
                }
            };
            SampleStats {
                id: m.ids[i].clone(),
                label: m.labels[i],
                mean,
                std,
                spread: s,
            }
        })
        .collect();
    let class = |label: u8| {
        let spreads: Vec<f64> = samples.iter().filter(|s| s.label == label).map(|s| s.spread).collect();
        let (mean_spread, std_spread) = mean_std(&spreads);
        ClassSpread {
            count: spreads.len(),
            mean_spread,
            std_spread,
        }
    };
    let classes = [class(0), class(1)];
    DropoutStats {
        spread,
        samples,
        classes,
    }
}
