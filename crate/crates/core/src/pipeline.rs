//! Whole-sequence drivers: segmentation with a shared background, then
//! frame-by-frame tracking.

use crate::association::{CellStatus, Tracker, TrackerParams};
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureSet, Point};
use crate::segmentation::{compute_background, segment, BackgroundModel, GrayFrame, Region, SegmentParams};

/// Background frames used when no other window is configured.
pub const BACKGROUND_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub region: Region,
    pub features: FeatureSet,
}

/// Background from the first `window` frames, then regions and features
/// for every frame.
pub fn detect_sequence(
    frames: &[GrayFrame],
    window: usize,
    params: &SegmentParams,
) -> Result<(BackgroundModel, Vec<Vec<Detection>>)> {
    let bg = compute_background(frames, window)?;
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let regions = segment(frame, &bg, params)?;
        let mut dets = Vec::with_capacity(regions.len());
        for region in regions {
            let features = extract_features(&region)?;
            dets.push(Detection { region, features });
        }
        out.push(dets);
    }
    Ok((bg, out))
}

/// One line of trajectory output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub frame: usize,
    pub cell_id: u64,
    pub position: Point,
    pub status: CellStatus,
    pub area: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSummary {
    pub frames: usize,
    pub regions: usize,
    pub cells: usize,
    pub occlusions: usize,
    pub exits: usize,
    pub stranded: usize,
}

/// Runs the tracker over pre-computed detections. Rows come out sorted by
/// frame, then cell id. Cells that left through the border have no row.
pub fn track_detections(
    detections: &[Vec<Detection>],
    first_frame: usize,
    width: usize,
    height: usize,
    params: TrackerParams,
    t1: DecisionTree,
    t2: DecisionTree,
) -> Result<(Vec<TrajectoryRow>, TrackSummary)> {
    let mut tracker = Tracker::new(params, t1, t2, width, height)?;
    let mut rows = Vec::new();
    let mut summary = TrackSummary::default();
    for (offset, dets) in detections.iter().enumerate() {
        let k = first_frame + offset;
        let features: Vec<FeatureSet> = dets.iter().map(|d| d.features.clone()).collect();
        let outcome = tracker.step(k, &features)?;
        summary.frames += 1;
        summary.regions += dets.len();
        summary.exits += outcome.update.exited.len();
        summary.stranded += outcome.update.stranded.len();
        for cell in tracker.positions_at(k) {
            if cell.status == CellStatus::Occluded && cell.last_seen == k {
                summary.occlusions += 1;
            }
            rows.push(TrajectoryRow {
                frame: k,
                cell_id: cell.id,
                position: cell.centroid,
                status: cell.status,
                area: cell.features.area,
            });
        }
    }
    summary.cells = tracker.cells().len();
    Ok((rows, summary))
}

/// Segments and tracks `frames`, which must share one size.
pub fn track_sequence(
    frames: &[GrayFrame],
    window: usize,
    segment_params: &SegmentParams,
    params: TrackerParams,
    t1: DecisionTree,
    t2: DecisionTree,
) -> Result<(Vec<TrajectoryRow>, TrackSummary)> {
    let first = frames.first().ok_or(Error::NotEnoughFrames {
        needed: window.max(1),
        available: 0,
    })?;
    let (_, detections) = detect_sequence(frames, window, segment_params)?;
    track_detections(
        &detections,
        first.index(),
        first.width(),
        first.height(),
        params,
        t1,
        t2,
    )
}
