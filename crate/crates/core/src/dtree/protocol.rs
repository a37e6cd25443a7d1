//! Repeated random train/test splits for comparing tree depths.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{train, DecisionTree, TrainConfig, TrainingSet};
use crate::error::{Error, Result};

/// Fraction of `data` rows whose hard decision disagrees with the label.
pub fn misclassification(tree: &DecisionTree, data: &TrainingSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut wrong = 0usize;
    for i in 0..data.len() {
        if tree.predict(data.row(i))? != data.label(i) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Shuffles row indices with `rng` and splits them at `train_fraction`.
pub fn split_train_test(n: usize, train_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = ((n as f64 * train_fraction).round() as usize).clamp(1.min(n), n);
    let test = idx.split_off(cut);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    pub depth: usize,
    pub mean_error: f64,
    pub min_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthReport {
    pub label: String,
    pub pairs: usize,
    pub positives: usize,
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<DepthRow>,
}

impl DepthReport {
    pub fn error_at(&self, depth: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.depth == depth).map(|r| r.mean_error)
    }
}

impl fmt::Display for DepthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# {}: {} pairs ({} positive), {} runs, seed {}",
            self.label, self.pairs, self.positives, self.runs, self.seed
        )?;
        writeln!(f, "depth\tmean_error_pct\tmin_error_pct\tmax_error_pct")?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{:.2}\t{:.2}\t{:.2}",
                r.depth,
                100.0 * r.mean_error,
                100.0 * r.min_error,
                100.0 * r.max_error
            )?;
        }
        Ok(())
    }
}

/// Trains one tree per depth on `runs` independent random splits and
/// reports the mean test misclassification per depth.
///
/// Run `r` shuffles with a generator seeded from `seed + r`; every depth
/// in a run sees the same split.
pub fn evaluate_depths(
    label: &str,
    data: &TrainingSet,
    depths: &[usize],
    runs: usize,
    train_fraction: f64,
    seed: u64,
    base: &TrainConfig,
) -> Result<DepthReport> {
    if data.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if runs == 0 || !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(
            "need at least one run and a train fraction in (0, 1)".into(),
        ));
    }
    let mut errors = vec![Vec::with_capacity(runs); depths.len()];
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
        let (train_idx, test_idx) = split_train_test(data.len(), train_fraction, &mut rng);
        if test_idx.is_empty() {
            return Err(Error::InvalidConfig("test split is empty".into()));
        }
        let train_set = data.subset(&train_idx);
        let test_set = data.subset(&test_idx);
        for (slot, &depth) in errors.iter_mut().zip(depths) {
            let cfg = TrainConfig {
                max_depth: depth,
                ..*base
            };
            let tree = train(&train_set, &cfg)?;
            slot.push(misclassification(&tree, &test_set)?);
        }
    }
    let rows = depths
        .iter()
        .zip(errors)
        .map(|(&depth, e)| DepthRow {
            depth,
            mean_error: e.iter().sum::<f64>() / e.len() as f64,
            min_error: e.iter().copied().fold(f64::INFINITY, f64::min),
            max_error: e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    Ok(DepthReport {
        label: label.to_string(),
        pairs: data.len(),
        positives: data.positives(),
        runs,
        seed,
        rows,
    })
}
