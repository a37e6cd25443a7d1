//! Binary decision trees grown by maximal entropy reduction.
//!
//! Each split node compares one feature against a threshold (`<=` goes
//! left). Leaves hold the fraction of positive training rows that reached
//! them, which is read as the probability that a pair shows the same cell.

mod model;
mod protocol;

pub use model::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use protocol::{evaluate_depths, misclassification, split_train_test, DepthReport, DepthRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_depth: usize,
    /// Candidate thresholds per feature, placed at uniform quantiles.
    pub subdivisions: usize,
    /// Nodes with at most this many rows become leaves.
    pub stop_size: usize,
    /// Nodes with entropy at or below this become leaves.
    pub stop_entropy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            subdivisions: 1000,
            stop_size: 20,
            stop_entropy: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.subdivisions == 0 || self.stop_size == 0 {
            return Err(Error::InvalidConfig(
                "max_depth, subdivisions and stop_size must all be >= 1".into(),
            ));
        }
        if !(self.stop_entropy >= 0.0) {
            return Err(Error::InvalidConfig("stop_entropy must be non-negative".into()));
        }
        Ok(())
    }
}

/// Labeled feature vectors of a fixed dimensionality, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    dim: usize,
    values: Vec<f64>,
    labels: Vec<bool>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: bool) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimensionality {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    #[inline]
    fn value(&self, row: u32, feature: usize) -> f64 {
        self.values[row as usize * self.dim + feature]
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        let mut out = TrainingSet::new(self.dim);
        for &i in rows {
            out.values.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Drops the leading `count` entries of every row.
    pub fn drop_leading(&self, count: usize) -> TrainingSet {
        let dim = self.dim.saturating_sub(count);
        let mut out = TrainingSet::new(dim);
        for i in 0..self.len() {
            out.values.extend_from_slice(&self.row(i)[count..]);
            out.labels.push(self.labels[i]);
        }
        out
    }
}

/// Shannon entropy in bits of a binary label set with `positives` of `n`.
pub fn binary_entropy(positives: usize, n: usize) -> f64 {
    if n == 0 || positives == 0 || positives == n {
        return 0.0;
    }
    let p = positives as f64 / n as f64;
    let q = 1.0 - p;
    -p * p.log2() - q * q.log2()
}

pub fn entropy(dataset: &TrainingSet) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(binary_entropy(dataset.positives(), dataset.len()))
}

/// Entropy reduction of splitting `n` rows (`pos` positive) into a left
/// part of `nl` rows (`pl` positive) and the remainder.
pub fn split_gain(n: usize, pos: usize, nl: usize, pl: usize) -> f64 {
    let nr = n - nl;
    let pr = pos - pl;
    let nf = n as f64;
    let g = binary_entropy(pos, n)
        - nl as f64 / nf * binary_entropy(pl, nl)
        - nr as f64 / nf * binary_entropy(pr, nr);
    g.max(0.0)
}

/// A chosen split. `feature` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best `(feature, threshold)` over the quantile candidate grid.
///
/// Returns `None` when the set is too small, already pure, or no candidate
/// leaves both sides non-empty.
pub fn best_split(dataset: &TrainingSet, config: &TrainConfig) -> Option<SplitChoice> {
    if dataset.len() < 2 || dataset.positives() == 0 || dataset.positives() == dataset.len() {
        return None;
    }
    let sorted = presort(dataset, (0..dataset.len() as u32).collect());
    best_split_sorted(dataset, &sorted, config.subdivisions)
}

fn presort(data: &TrainingSet, rows: Vec<u32>) -> Vec<Vec<u32>> {
    (0..data.dim)
        .map(|k| {
            let mut order = rows.clone();
            order.sort_by(|&a, &b| data.value(a, k).total_cmp(&data.value(b, k)).then(a.cmp(&b)));
            order
        })
        .collect()
}

fn best_split_sorted(data: &TrainingSet, sorted: &[Vec<u32>], subdivisions: usize) -> Option<SplitChoice> {
    let n = sorted.first()?.len();
    if n < 2 {
        return None;
    }
    let pos = sorted[0].iter().filter(|&&r| data.labels[r as usize]).count();
    let mut best: Option<SplitChoice> = None;

    for (k, order) in sorted.iter().enumerate() {
        let mut left = 0usize;
        let mut left_pos = 0usize;
        let mut last_tau = f64::NAN;
        for j in 0..subdivisions {
            let at = ((j + 1) * n / (subdivisions + 1)).min(n - 1);
            let tau = data.value(order[at], k);
            if tau == last_tau {
                continue;
            }
            last_tau = tau;
            while left < n && data.value(order[left], k) <= tau {
                if data.labels[order[left] as usize] {
                    left_pos += 1;
                }
                left += 1;
            }
            if left == n {
                break;
            }
            let gain = split_gain(n, pos, left, left_pos);
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: k,
                    threshold: tau,
                    gain,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        /// Zero-based feature index.
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        probability: f64,
        support: usize,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub dim: usize,
    pub config: TrainConfig,
    pub root: Node,
}

impl DecisionTree {
    /// Leaf probability reached by `v`.
    pub fn classify(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::Dimensionality {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { probability, .. } => return Ok(*probability),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if v[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Hard decision: same cell iff the leaf probability exceeds one half.
    pub fn predict(&self, v: &[f64]) -> Result<bool> {
        Ok(self.classify(v)? > 0.5)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

pub fn train(dataset: &TrainingSet, config: &TrainConfig) -> Result<DecisionTree> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let sorted = presort(dataset, (0..dataset.len() as u32).collect());
    let mut scratch = vec![false; dataset.len()];
    let root = grow(dataset, config, sorted, 0, &mut scratch);
    Ok(DecisionTree {
        dim: dataset.dim,
        config: *config,
        root,
    })
}

fn grow(data: &TrainingSet, config: &TrainConfig, sorted: Vec<Vec<u32>>, depth: usize, goes_left: &mut [bool]) -> Node {
    // A zero-dimensional set still has rows; fall back to counting labels.
    let rows: &[u32] = match sorted.first() {
        Some(r) => r,
        None => &[],
    };
    let n = if data.dim == 0 { data.len() } else { rows.len() };
    let pos = if data.dim == 0 {
        data.positives()
    } else {
        rows.iter().filter(|&&r| data.labels[r as usize]).count()
    };
    let leaf = Node::Leaf {
        probability: pos as f64 / n as f64,
        support: n,
    };

    if depth >= config.max_depth || n <= config.stop_size || binary_entropy(pos, n) <= config.stop_entropy {
        return leaf;
    }
    let Some(choice) = best_split_sorted(data, &sorted, config.subdivisions) else {
        return leaf;
    };

    for &r in &sorted[choice.feature] {
        goes_left[r as usize] = data.value(r, choice.feature) <= choice.threshold;
    }
    let mut left_lists = Vec::with_capacity(sorted.len());
    let mut right_lists = Vec::with_capacity(sorted.len());
    for list in sorted {
        let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| goes_left[r as usize]);
        left_lists.push(l);
        right_lists.push(r);
    }
    let left = grow(data, config, left_lists, depth + 1, goes_left);
    let right = grow(data, config, right_lists, depth + 1, goes_left);
    Node::Split {
        feature: choice.feature,
        threshold: choice.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}
