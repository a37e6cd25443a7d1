//! Scoring trajectories against ground truth.
//!
//! In every frame, visible truth cells and trajectory rows are matched
//! one-to-one by centroid distance within a gate, keeping the previous
//! frame's pairings where they still fit. Each track is then
//! given the truth id it was matched to most often. A truth instance is
//! correct when its matched track carries its id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::association::{standard_hungarian, Matrix};
use crate::error::{Error, Result};
use crate::pipeline::TrajectoryRow;
use crate::synth::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Largest truth-to-track distance accepted as a match, pixels.
    pub gate: f64,
    /// Frames searched on each side of an occlusion for the cell's track.
    pub lookaround: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gate: 25.0,
            lookaround: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: usize,
    pub truth_instances: usize,
    pub matched: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub id_switches: usize,
    pub occlusion_events: usize,
    /// Cells taking part in a scored occlusion event (two per event).
    pub occlusion_cells: usize,
    pub recovered: usize,
    /// `recovered / occlusion_cells`, or 1 with nothing to recover.
    pub recovery_rate: f64,
    pub tracks: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames\t{}", self.frames)?;
        writeln!(f, "truth_instances\t{}", self.truth_instances)?;
        writeln!(f, "matched\t{}", self.matched)?;
        writeln!(f, "correct\t{}", self.correct)?;
        writeln!(f, "accuracy\t{:.4}", self.accuracy)?;
        writeln!(f, "id_switches\t{}", self.id_switches)?;
        writeln!(f, "tracks\t{}", self.tracks)?;
        writeln!(f, "occlusion_events\t{}", self.occlusion_events)?;
        writeln!(f, "occlusion_cells\t{}", self.occlusion_cells)?;
        writeln!(f, "recovered\t{}", self.recovered)?;
        write!(f, "recovery_rate\t{:.4}", self.recovery_rate)
    }
}

/// Per frame, truth id to matched track id. A pairing from the previous
/// frame is kept while it stays within the gate; the rest are matched by
/// minimum total distance.
pub fn match_frames(
    rows: &[TrajectoryRow],
    truth: &GroundTruth,
    first_frame: usize,
    gate: f64,
) -> Result<Vec<BTreeMap<u64, u64>>> {
    let mut by_frame: Vec<Vec<&TrajectoryRow>> = vec![Vec::new(); truth.frames.len()];
    for row in rows {
        let k = row
            .frame
            .checked_sub(first_frame)
            .filter(|&k| k < truth.frames.len())
            .ok_or(Error::MissingTruth(row.frame))?;
        by_frame[k].push(row);
    }
    let mut out: Vec<BTreeMap<u64, u64>> = Vec::with_capacity(truth.frames.len());
    for (cells, tracks) in truth.frames.iter().zip(&by_frame) {
        let mut frame = BTreeMap::new();
        let mut taken = vec![false; tracks.len()];
        let mut open = Vec::new();
        for c in cells.iter().filter(|c| c.visible) {
            let kept = out.last().and_then(|prev| prev.get(&c.id)).and_then(|&id| {
                tracks
                    .iter()
                    .position(|t| t.cell_id == id && c.centroid.distance(t.position) <= gate)
            });
            match kept {
                Some(j) if !taken[j] => {
                    taken[j] = true;
                    frame.insert(c.id, tracks[j].cell_id);
                }
                _ => open.push(c),
            }
        }
        let free: Vec<usize> = (0..tracks.len()).filter(|&j| !taken[j]).collect();
        let mut values = Matrix::zeros(open.len(), free.len());
        for (i, c) in open.iter().enumerate() {
            for (jj, &j) in free.iter().enumerate() {
                let d = c.centroid.distance(tracks[j].position);
                values.set(i, jj, if d <= gate { gate - d } else { -1e6 });
            }
        }
        for (i, jj) in standard_hungarian(&values).into_iter().enumerate() {
            if let Some(jj) = jj {
                let t = tracks[free[jj]];
                if open[i].centroid.distance(t.position) <= gate {
                    frame.insert(open[i].id, t.cell_id);
                }
            }
        }
        out.push(frame);
    }
    Ok(out)
}

pub fn evaluate(
    rows: &[TrajectoryRow],
    truth: &GroundTruth,
    first_frame: usize,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let matches = match_frames(rows, truth, first_frame, config.gate)?;

    let mut votes: HashMap<u64, BTreeMap<u64, usize>> = HashMap::new();
    for frame in &matches {
        for (&truth_id, &track) in frame {
            *votes.entry(track).or_default().entry(truth_id).or_default() += 1;
        }
    }
    // Highest count wins; ties go to the lower truth id.
    let owner: HashMap<u64, u64> = votes
        .iter()
        .map(|(&track, counts)| {
            let best = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&id, _)| id)
                .unwrap_or(0);
            (track, best)
        })
        .collect();

    let truth_instances = truth
        .frames
        .iter()
        .map(|f| f.iter().filter(|c| c.visible).count())
        .sum::<usize>();
    let matched = matches.iter().map(BTreeMap::len).sum::<usize>();
    let correct = matches
        .iter()
        .flat_map(|f| f.iter())
        .filter(|(truth_id, track)| owner.get(track) == Some(truth_id))
        .count();

    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut id_switches = 0;
    for frame in &matches {
        for (&truth_id, &track) in frame {
            if let Some(prev) = last.insert(truth_id, track) {
                id_switches += (prev != track) as usize;
            }
        }
    }

    let events = truth.overlap_events();
    let n = matches.len();
    let track_near = |id: u64, frames: &mut dyn Iterator<Item = usize>| -> Option<u64> {
        frames
            .take(config.lookaround)
            .find_map(|k| matches[k].get(&id).copied())
    };
    let (mut occlusion_cells, mut recovered) = (0, 0);
    for &(a, b, start, end) in &events {
        for id in [a, b] {
            let before = track_near(id, &mut (0..start).rev());
            let after = track_near(id, &mut (end + 1..n));
            if let (Some(x), Some(y)) = (before, after) {
                occlusion_cells += 1;
                recovered += (x == y) as usize;
            }
        }
    }

    Ok(EvalReport {
        frames: n,
        truth_instances,
        matched,
        correct,
        accuracy: if truth_instances == 0 {
            1.0
        } else {
            correct as f64 / truth_instances as f64
        },
        id_switches,
        occlusion_events: events.len(),
        occlusion_cells,
        recovered,
        recovery_rate: if occlusion_cells == 0 {
            1.0
        } else {
            recovered as f64 / occlusion_cells as f64
        },
        tracks: votes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::CellStatus;
    use crate::features::Point;
    use crate::synth::TruthCell;

    fn truth_cell(id: u64, x: f64) -> TruthCell {
        TruthCell {
            id,
            centroid: Point::new(x, 10.0),
            visible: true,
            pixels: Vec::new(),
        }
    }

    fn row(frame: usize, id: u64, x: f64) -> TrajectoryRow {
        TrajectoryRow {
            frame,
            cell_id: id,
            position: Point::new(x, 10.0),
            status: CellStatus::Active,
            area: 100,
        }
    }

    fn two_cells(frames: usize) -> GroundTruth {
        GroundTruth {
            width: 100,
            height: 20,
            frames: (0..frames)
                .map(|_| vec![truth_cell(1, 20.0), truth_cell(2, 80.0)])
                .collect(),
            overlaps: vec![Vec::new(); frames],
        }
    }

    #[test]
    fn perfect_tracking() {
        let truth = two_cells(4);
        let rows: Vec<_> = (0..4).flat_map(|k| [row(k, 7, 21.0), row(k, 9, 79.0)]).collect();
        let r = evaluate(&rows, &truth, 0, &EvalConfig::default()).unwrap();
        assert_eq!((r.correct, r.truth_instances, r.id_switches), (8, 8, 0));
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.recovery_rate, 1.0);
    }

    #[test]
    fn swap_costs_accuracy_and_counts_switches() {
        let truth = two_cells(4);
        let mut rows: Vec<_> = (0..3).flat_map(|k| [row(k, 7, 21.0), row(k, 9, 79.0)]).collect();
        rows.extend([row(3, 9, 21.0), row(3, 7, 79.0)]);
        let r = evaluate(&rows, &truth, 0, &EvalConfig::default()).unwrap();
        assert_eq!(r.correct, 6);
        assert_eq!(r.id_switches, 2);
    }

    #[test]
    fn merged_tracks_keep_their_truth() {
        // Both tracks sit on one merged centroid in frame 1; the earlier
        // pairing must survive even though truth 2 is nearer to track 7.
        let mut truth = two_cells(3);
        truth.frames[1][0].centroid = Point::new(48.0, 10.0);
        truth.frames[1][1].centroid = Point::new(52.0, 10.0);
        let rows = vec![
            row(0, 7, 20.0),
            row(0, 9, 80.0),
            row(1, 9, 50.0),
            row(1, 7, 50.0),
            row(2, 7, 20.0),
            row(2, 9, 80.0),
        ];
        let r = evaluate(&rows, &truth, 0, &EvalConfig::default()).unwrap();
        assert_eq!((r.correct, r.id_switches), (6, 0));
    }

    #[test]
    fn far_rows_are_not_matched() {
        let truth = two_cells(1);
        let rows = vec![row(0, 1, 50.0)];
        let r = evaluate(&rows, &truth, 0, &EvalConfig::default()).unwrap();
        assert_eq!(r.matched, 0);
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn recovery_after_overlap() {
        let mut truth = two_cells(5);
        truth.overlaps[2] = vec![(1, 2)];
        let mut rows: Vec<_> = (0..5).flat_map(|k| [row(k, 7, 21.0), row(k, 9, 79.0)]).collect();
        // After the event truth 2 picks up a different track.
        rows.retain(|r| !(r.frame > 2 && r.cell_id == 9));
        rows.extend([row(3, 11, 79.0), row(4, 11, 79.0)]);
        let r = evaluate(&rows, &truth, 0, &EvalConfig::default()).unwrap();
        assert_eq!(r.occlusion_events, 1);
        assert_eq!((r.occlusion_cells, r.recovered), (2, 1));
        assert_eq!(r.recovery_rate, 0.5);
    }

    #[test]
    fn rows_outside_truth_are_errors() {
        let truth = two_cells(2);
        assert!(matches!(
            evaluate(&[row(5, 1, 0.0)], &truth, 0, &EvalConfig::default()),
            Err(Error::MissingTruth(5))
        ));
    }
}
