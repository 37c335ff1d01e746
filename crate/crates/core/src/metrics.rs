//! Binary-classification metrics over scored predictions.
//!
//! A sample is predicted positive iff `score >= threshold`.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction set is empty")]
    EmptySet,
    #[error("AUC needs both classes; got {positives} positives and {negatives} negatives")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("score {score} for `{id}` outside [0, 1]")]
    ScoreRange { id: String, score: f64 },
    #[error("label {label} for `{id}` is not 0 or 1")]
    BadLabel { id: String, label: u8 },
    #[error("duplicate sample id `{id}` in fold {fold:?}")]
    DuplicateId { id: String, fold: Option<u32> },
    #[error("no prediction sets given")]
    NoFolds,
    #[error("prediction sets disagree on sample ids; missing: {missing:?}")]
    IdMismatch { missing: Vec<String> },
    #[error("label for `{0}` differs between prediction sets")]
    LabelMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub id: String,
    pub score: f64,
    pub label: u8,
    pub fold: Option<u32>,
}

impl Record {
    pub fn new(id: impl Into<String>, score: f64, label: u8, fold: Option<u32>) -> Self {
        Self {
            id: id.into(),
            score,
            label,
            fold,
        }
    }
}

/// Validated list of scored, labelled samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    records: Vec<Record>,
}

impl PredictionSet {
    pub fn new(records: Vec<Record>) -> Result<Self, MetricsError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(MetricsError::ScoreRange {
                    id: r.id.clone(),
                    score: r.score,
                });
            }
            if r.label > 1 {
                return Err(MetricsError::BadLabel {
                    id: r.id.clone(),
                    label: r.label,
                });
            }
            if !seen.insert((r.id.as_str(), r.fold)) {
                return Err(MetricsError::DuplicateId {
                    id: r.id.clone(),
                    fold: r.fold,
                });
            }
        }
        Ok(Self { records })
    }

    /// Ids `"0"`, `"1"`, ... and no folds.
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Result<Self, MetricsError> {
        assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
        Self::new(
            scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&s, &l))| Record::new(i.to_string(), s, l, None))
                .collect(),
        )
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }

    /// Splits by fold id in ascending fold order; records without a fold
    /// form a leading group.
    pub fn split_folds(&self) -> Vec<PredictionSet> {
        let mut folds: Vec<Option<u32>> = self.records.iter().map(|r| r.fold).collect();
        folds.sort();
        folds.dedup();
        folds
            .into_iter()
            .map(|f| PredictionSet {
                records: self.records.iter().filter(|r| r.fold == f).cloned().collect(),
            })
            .collect()
    }

    /// Returns a copy with replaced scores (same order).
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self, MetricsError> {
        assert_eq!(scores.len(), self.len());
        Self::new(
            self.records
                .iter()
                .zip(scores)
                .map(|(r, &s)| Record { score: s, ..r.clone() })
                .collect(),
        )
    }

    pub(crate) fn from_records_unchecked(records: Vec<Record>) -> Self {
        Self { records }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub const fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&self, other: &Confusion) -> Confusion {
        Confusion::new(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn_ + other.fn_,
        )
    }
}

fn check_threshold(t: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(MetricsError::BadThreshold(t))
    }
}

pub fn confusion(p: &PredictionSet, threshold: f64) -> Result<Confusion, MetricsError> {
    check_threshold(threshold)?;
    if p.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut c = Confusion::default();
    for r in p.records() {
        match (r.score >= threshold, r.label == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    let denom = factors.iter().product::<f64>().sqrt();
    ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
}

pub fn tpr(c: &Confusion) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn fpr(c: &Confusion) -> f64 {
    ratio(c.fp, c.fp + c.tn)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_counts(p: &PredictionSet) -> Result<(usize, usize), MetricsError> {
    let pos = p.positives();
    let neg = p.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::OneClassOnly {
            positives: pos,
            negatives: neg,
        });
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC: `P(s+ > s-) + 0.5 P(s+ = s-)`, via midranks.
pub fn roc_auc(p: &PredictionSet) -> Result<f64, MetricsError> {
    let (pos, neg) = class_counts(p)?;
    let mut order: Vec<&Record> = p.records().iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    // Sum of positive ranks, with tied groups sharing the mean rank (x2 to
    // stay integral).
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        // ranks i+1 ..= j, mean (i + 1 + j) / 2
        let mid2 = (i + 1 + j) as u128;
        let group_pos = order[i..j].iter().filter(|r| r.label == 1).count() as u128;
        rank_sum2 += mid2 * group_pos;
        i = j;
    }
    let (pos, neg) = (pos as u128, neg as u128);
    // U = R+ - pos(pos+1)/2 ; in doubled units
    let u2 = rank_sum2 - pos * (pos + 1);
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

/// ROC points `(fpr, tpr)` from sweeping every unique score as a threshold,
/// starting at `(0, 0)` and ending at `(1, 1)`.
pub fn roc_curve(p: &PredictionSet) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (pos, neg) = class_counts(p)?;
    let mut order: Vec<&Record> = p.records().iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = order[i].score;
        while i < order.len() && order[i].score == s {
            if order[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of `(x, y)` points.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledScores {
    pub confusion: Confusion,
    pub mcc: f64,
    pub auc: f64,
}

/// Cross-validation pooling: confusion counts summed over folds, AUC on the
/// concatenated records.
pub fn pooled_cv(folds: &[PredictionSet], threshold: f64) -> Result<PooledScores, MetricsError> {
    if folds.is_empty() {
        return Err(MetricsError::NoFolds);
    }
    let mut total = Confusion::default();
    for f in folds {
        total = total.add(&confusion(f, threshold)?);
    }
    let all = PredictionSet::from_records_unchecked(
        folds.iter().flat_map(|f| f.records().iter().cloned()).collect(),
    );
    Ok(PooledScores {
        confusion: total,
        mcc: mcc(&total),
        auc: roc_auc(&all)?,
    })
}

/// Per-sample mean score over several models' predictions for the same
/// samples. Output follows the first set's order and carries its labels
/// and folds.
pub fn fold_mean(sets: &[PredictionSet]) -> Result<PredictionSet, MetricsError> {
    let first = sets.first().ok_or(MetricsError::NoFolds)?;
    let mut sums: Vec<f64> = first.scores();
    let index: HashMap<&str, usize> = first
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    if index.len() != first.len() {
        let mut seen = HashSet::new();
        let dup = first.records().iter().find(|r| !seen.insert(r.id.as_str())).unwrap();
        return Err(MetricsError::DuplicateId {
            id: dup.id.clone(),
            fold: None,
        });
    }
    for set in &sets[1..] {
        let ids: HashSet<&str> = set.records().iter().map(|r| r.id.as_str()).collect();
        let mut missing: Vec<String> = index
            .keys()
            .filter(|id| !ids.contains(*id))
            .map(|s| s.to_string())
            .chain(
                ids.iter()
                    .filter(|id| !index.contains_key(*id))
                    .map(|s| s.to_string()),
            )
            .collect();
        if !missing.is_empty() || ids.len() != set.len() {
            missing.sort();
            return Err(MetricsError::IdMismatch { missing });
        }
        for r in set.records() {
            let i = index[r.id.as_str()];
            if first.records()[i].label != r.label {
                return Err(MetricsError::LabelMismatch(r.id.clone()));
            }
            sums[i] += r.score;
        }
    }
    let k = sets.len() as f64;
    let records = first
        .records()
        .iter()
        .zip(sums)
        .map(|(r, s)| Record {
            score: (s / k).clamp(0.0, 1.0),
            ..r.clone()
        })
        .collect();
    Ok(PredictionSet::from_records_unchecked(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> PredictionSet {
        PredictionSet::from_scores(scores, labels).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let p = set(&[0.9, 0.1], &[1, 0]);
        assert_eq!(confusion(&p, 0.5).unwrap(), Confusion::new(1, 0, 1, 0));
        let c0 = confusion(&p, 0.0).unwrap();
        assert_eq!((c0.tn, c0.fn_), (0, 0));
        // closed at the threshold
        assert_eq!(confusion(&set(&[0.5], &[1]), 0.5).unwrap().tp, 1);
        assert_eq!(confusion(&PredictionSet::default(), 0.5), Err(MetricsError::EmptySet));
        assert!(confusion(&p, 1.5).is_err());
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&Confusion::new(1, 0, 1, 0)), 1.0);
        assert_eq!(mcc(&Confusion::new(0, 1, 0, 1)), -1.0);
        let v = mcc(&Confusion::new(2, 1, 3, 0));
        assert!((v - 6.0 / 72f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.70711).abs() < 1e-5);
        assert_eq!(mcc(&Confusion::new(0, 0, 5, 5)), 0.0);
    }

    #[test]
    fn rate_examples() {
        let c = Confusion::new(1, 0, 1, 0);
        assert_eq!((tpr(&c), fpr(&c)), (1.0, 0.0));
        let c = Confusion::new(0, 0, 5, 5);
        assert_eq!((tpr(&c), fpr(&c)), (0.0, 0.0));
        let c = Confusion::new(3, 2, 8, 1);
        assert_eq!((tpr(&c), fpr(&c)), (0.75, 0.2));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&set(&[0.3; 4], &[0, 1, 0, 1])).unwrap(), 0.5);
        assert_eq!(roc_auc(&set(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&set(&[0.1, 0.2], &[1, 1])),
            Err(MetricsError::OneClassOnly { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn curve_area_matches_auc() {
        let p = set(&[0.1, 0.4, 0.35, 0.8, 0.4, 0.4], &[0, 0, 1, 1, 1, 0]);
        let pts = roc_curve(&p).unwrap();
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        assert!((trapezoid(&pts) - roc_auc(&p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pooled_single_and_doubled() {
        let p = set(&[0.9, 0.2, 0.6, 0.4, 0.7], &[1, 0, 0, 1, 1]);
        let one = pooled_cv(std::slice::from_ref(&p), 0.5).unwrap();
        assert_eq!(one.confusion, confusion(&p, 0.5).unwrap());
        assert_eq!(one.auc, roc_auc(&p).unwrap());
        let two = pooled_cv(&[p.clone(), p.clone()], 0.5).unwrap();
        assert!((two.mcc - one.mcc).abs() < 1e-12);
        assert_eq!(pooled_cv(&[], 0.5), Err(MetricsError::NoFolds));
    }

    #[test]
    fn fold_mean_examples() {
        let a = set(&[0.2, 0.9], &[0, 1]);
        let b = set(&[0.6, 0.9], &[0, 1]);
        assert_eq!(fold_mean(std::slice::from_ref(&a)).unwrap(), a);
        let m = fold_mean(&[a.clone(), b]).unwrap();
        assert!((m.records()[0].score - 0.4).abs() < 1e-15);
        assert_eq!(fold_mean(&[a.clone(), a.clone(), a.clone()]).unwrap().labels(), a.labels());
        let c = PredictionSet::new(vec![Record::new("0", 0.1, 0, None), Record::new("x", 0.1, 1, None)]).unwrap();
        assert_eq!(
            fold_mean(&[a, c]),
            Err(MetricsError::IdMismatch {
                missing: vec!["1".into(), "x".into()]
            })
        );
    }

    #[test]
    fn set_validation() {
        assert!(PredictionSet::from_scores(&[1.3], &[1]).is_err());
        assert!(PredictionSet::from_scores(&[0.3], &[2]).is_err());
        let dup = vec![Record::new("a", 0.1, 0, Some(1)), Record::new("a", 0.2, 1, Some(1))];
        assert!(matches!(PredictionSet::new(dup), Err(MetricsError::DuplicateId { .. })));
        let ok = vec![Record::new("a", 0.1, 0, Some(1)), Record::new("a", 0.2, 1, Some(2))];
        let p = PredictionSet::new(ok).unwrap();
        assert_eq!(p.split_folds().len(), 2);
    }
}
