//! Labelled difference vectors from a sequence with ground truth.
//!
//! A detected region belongs to a truth cell covering more than half of
//! its pixels, unless some other cell also covers a quarter or more, in
//! which case the region is a merge. A merged region is never the same
//! cell as anything tracked, so it only appears as a negative example.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dtree::TrainingSet;
use crate::error::{Error, Result};
use crate::features::{diff_vector, Point, TrackRef, DIFF_DIM, TRUNCATED_DIM};
use crate::pipeline::Detection;
use crate::segmentation::Region;
use crate::synth::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    /// Frames between the two members of a pair. 1 gives full vectors,
    /// anything larger gives vectors without the two position entries.
    pub gap: usize,
    /// Only pair regions whose centroids are at most this far apart.
    pub max_distance: Option<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            gap: 1,
            max_distance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelStats {
    pub regions: usize,
    pub labelled: usize,
    pub merged: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Pairs whose tracked side sat inside a merge.
    pub occluded: usize,
}

impl LabelStats {
    fn count(&mut self, label: bool) {
        if label {
            self.positives += 1;
        } else {
            self.negatives += 1;
        }
    }
}

/// Share of a region's pixels another cell may hold before the region
/// counts as a merge.
pub const MERGE_SHARE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    Cell(u64),
    Merged,
    Unknown,
}

pub fn region_label(region: &Region, truth: &GroundTruth, frame: usize) -> RegionLabel {
    let shares = region_shares(region, truth, frame);
    if shares.iter().filter(|&&(_, s)| s >= MERGE_SHARE).count() >= 2 {
        return RegionLabel::Merged;
    }
    match shares.iter().find(|&&(_, s)| s > 0.5) {
        Some(&(id, _)) => RegionLabel::Cell(id),
        None => RegionLabel::Unknown,
    }
}

/// Cells holding at least [`MERGE_SHARE`] of a region.
pub fn merge_members(region: &Region, truth: &GroundTruth, frame: usize) -> Vec<u64> {
    region_shares(region, truth, frame)
        .into_iter()
        .filter(|&(_, s)| s >= MERGE_SHARE)
        .map(|(id, _)| id)
        .collect()
}

fn region_shares(region: &Region, truth: &GroundTruth, frame: usize) -> Vec<(u64, f64)> {
    let n = region.area() as f64;
    let w = truth.width as u32;
    truth.frames[frame]
        .iter()
        .map(|cell| {
            let inside = region
                .pixels
                .iter()
                .filter(|p| cell.pixels.binary_search(&(p.y * w + p.x)).is_ok())
                .count();
            (cell.id, inside as f64 / n)
        })
        .filter(|&(_, s)| s > 0.0)
        .collect()
}

pub fn label_pairs(
    detections: &[Vec<Detection>],
    truth: &GroundTruth,
    config: &LabelConfig,
) -> Result<(TrainingSet, LabelStats)> {
    if config.gap == 0 {
        return Err(Error::InvalidConfig("pair gap must be >= 1".into()));
    }
    if detections.len() != truth.frames.len() {
        return Err(Error::FrameMisalignment {
            frame: detections.len().min(truth.frames.len()),
        });
    }
    let mut stats = LabelStats::default();
    let owners: Vec<Vec<RegionLabel>> = detections
        .iter()
        .enumerate()
        .map(|(k, dets)| {
            dets.iter()
                .map(|d| {
                    let label = region_label(&d.region, truth, k);
                    stats.regions += 1;
                    stats.labelled += matches!(label, RegionLabel::Cell(_)) as usize;
                    stats.merged += (label == RegionLabel::Merged) as usize;
                    label
                })
                .collect()
        })
        .collect();

    let full = config.gap == 1;
    let mut set = TrainingSet::new(if full { DIFF_DIM } else { TRUNCATED_DIM });
    let position_of = |k: usize, id: u64| -> Option<Point> {
        owners[k]
            .iter()
            .position(|&o| o == RegionLabel::Cell(id))
            .map(|j| detections[k][j].features.centroid)
    };

    // Last region each cell owned alone, standing in for the frozen
    // features of a cell tracked through a merge.
    let mut last_owned: HashMap<u64, (usize, usize)> = HashMap::new();
    for k in config.gap..detections.len() {
        let prev = k - config.gap;
        if full {
            for (j, o) in owners[prev].iter().enumerate() {
                if let RegionLabel::Cell(id) = *o {
                    last_owned.insert(id, (prev, j));
                }
            }
        }
        for (c, c_owner) in detections[k].iter().zip(&owners[k]) {
            let c_id = match *c_owner {
                RegionLabel::Cell(id) => Some(id),
                RegionLabel::Merged => None,
                RegionLabel::Unknown => continue,
            };
            for (l, l_owner) in detections[prev].iter().zip(&owners[prev]) {
                let RegionLabel::Cell(l_id) = *l_owner else { continue };
                if let Some(max) = config.max_distance {
                    if c.features.centroid.distance(l.features.centroid) > max {
                        continue;
                    }
                }
                let previous = if full && prev > 0 {
                    position_of(prev - 1, l_id)
                } else {
                    None
                };
                let v = diff_vector(
                    &c.features,
                    &TrackRef {
                        features: &l.features,
                        centroid: l.features.centroid,
                        previous,
                    },
                );
                let label = c_id == Some(l_id);
                if full {
                    set.push(v.as_slice(), label)?;
                } else {
                    set.push(v.truncate().as_slice(), label)?;
                }
                stats.count(label);
            }
            if !full {
                continue;
            }
            for (m, m_owner) in detections[prev].iter().zip(&owners[prev]) {
                if *m_owner != RegionLabel::Merged {
                    continue;
                }
                let at = m.features.centroid;
                if config.max_distance.is_some_and(|max| c.features.centroid.distance(at) > max) {
                    continue;
                }
                for id in merge_members(&m.region, truth, prev) {
                    let Some(&(kk, jj)) = last_owned.get(&id) else { continue };
                    let v = diff_vector(
                        &c.features,
                        &TrackRef {
                            features: &detections[kk][jj].features,
                            centroid: at,
                            previous: Some(at),
                        },
                    );
                    let label = c_id == Some(id);
                    set.push(v.as_slice(), label)?;
                    stats.count(label);
                    stats.occluded += 1;
                }
            }
        }
    }
    Ok((set, stats))
}
