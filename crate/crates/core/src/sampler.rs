//! Class-balanced batch index generation.
//!
//! Each batch holds exactly `n_pos = round(pos_fraction * batch_size)`
//! positives. Negatives are dealt from shuffled epochs of the negative pool;
//! positives are drawn afresh for every batch (distinct within the batch),
//! so the minority class is reused across batches.

use thiserror::Error;

use crate::rng::RandomStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("{class} pool has {available} sample(s) but each batch needs {needed} distinct")]
    InfeasibleBatch {
        class: &'static str,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub pos_fraction: f64,
    pub labels: Vec<u8>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(labels: Vec<u8>, batch_size: usize, pos_fraction: f64, seed: u64) -> Self {
        Self {
            batch_size,
            pos_fraction,
            labels,
            seed,
        }
    }

    /// Positives per batch, rounding half up.
    pub fn n_pos(&self) -> usize {
        (self.pos_fraction * self.batch_size as f64 + 0.5).floor() as usize
    }

    pub fn n_neg(&self) -> usize {
        self.batch_size - self.n_pos().min(self.batch_size)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.pos_fraction > 0.0 && self.pos_fraction < 1.0) {
            return bad(format!("pos_fraction must lie in (0, 1), got {}", self.pos_fraction));
        }
        if self.n_pos() == 0 {
            return bad(format!(
                "pos_fraction {} gives no positives in a batch of {}",
                self.pos_fraction, self.batch_size
            ));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return bad(format!("label {l} is not 0 or 1"));
        }
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        if pos == 0 || pos == self.labels.len() {
            return bad("labels must contain both classes".into());
        }
        if pos < self.n_pos() {
            return Err(SamplerError::InfeasibleBatch {
                class: "positive",
                available: pos,
                needed: self.n_pos(),
            });
        }
        let neg = self.labels.len() - pos;
        if neg < self.n_neg() {
            return Err(SamplerError::InfeasibleBatch {
                class: "negative",
                available: neg,
                needed: self.n_neg(),
            });
        }
        Ok(())
    }
}

/// Deterministic batch generator.
#[derive(Debug, Clone)]
pub struct Sampler {
    n_pos: usize,
    n_neg: usize,
    positives: Vec<usize>,
    negatives: Vec<usize>,
    cursor: usize,
    epoch: u64,
    neg_rng: RandomStream,
    pos_rng: RandomStream,
    mix_rng: RandomStream,
}

impl Sampler {
    pub fn new(cfg: &SamplerConfig) -> Result<Self, SamplerError> {
        cfg.validate()?;
        let root = RandomStream::new(cfg.seed);
        let (positives, negatives): (Vec<usize>, Vec<usize>) =
            (0..cfg.labels.len()).partition(|&i| cfg.labels[i] == 1);
        let mut s = Self {
            n_pos: cfg.n_pos(),
            n_neg: cfg.n_neg(),
            positives,
            negatives,
            cursor: 0,
            epoch: 0,
            neg_rng: root.child(0),
            pos_rng: root.child(1),
            mix_rng: root.child(2),
        };
        s.neg_rng.shuffle(&mut s.negatives);
        Ok(s)
    }

    /// Completed plus current negative epochs (starts at 0).
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Starts a new epoch; negatives already in `taken` go to the back so
    /// the batch under construction stays distinct.
    fn reshuffle(&mut self, taken: &[usize]) {
        self.neg_rng.shuffle(&mut self.negatives);
        let (mut fresh, held): (Vec<usize>, Vec<usize>) =
            self.negatives.iter().partition(|i| !taken.contains(i));
        fresh.extend(held);
        self.negatives = fresh;
        self.cursor = 0;
        self.epoch += 1;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.n_pos + self.n_neg);
        for &k in &self.pos_rng.sample_indices(self.positives.len(), self.n_pos) {
            batch.push(self.positives[k]);
        }
        let mut negs = Vec::with_capacity(self.n_neg);
        while negs.len() < self.n_neg {
            if self.cursor == self.negatives.len() {
                self.reshuffle(&negs);
            }
            negs.push(self.negatives[self.cursor]);
            self.cursor += 1;
        }
        batch.extend(negs);
        self.mix_rng.shuffle(&mut batch);
        batch
    }
}

impl Iterator for Sampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}

pub fn batches(cfg: &SamplerConfig, n_batches: usize) -> Result<Vec<Vec<usize>>, SamplerError> {
    Ok(Sampler::new(cfg)?.take(n_batches).collect())
}
