//! List maintenance after each association and the per-frame driver.

use super::{
    border_distance, build_matrix, modified_hungarian, AssociationMatrix, CellStatus, FrameContext, TrackedCell,
    TrackerParams, TrajectoryPoint,
};
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::features::FeatureSet;

/// What happened to the regions and cells of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameUpdate {
    /// Per region, the ids of the cells now located there.
    pub region_cells: Vec<Vec<u64>>,
    /// Ids that went out of frame.
    pub exited: Vec<u64>,
    /// Ids that kept a stale position because nothing could take them.
    pub stranded: Vec<u64>,
}

fn place(cell: &mut TrackedCell, frame: usize, region: &FeatureSet, status: CellStatus) {
    cell.previous = if cell.seen_before(frame) {
        Some(cell.centroid)
    } else {
        None
    };
    cell.centroid = region.centroid;
    cell.features = region.clone();
    cell.status = status;
    cell.last_seen = frame;
    cell.trajectory.push(TrajectoryPoint {
        frame,
        position: region.centroid,
        status,
    });
}

fn spawn(cells: &mut Vec<TrackedCell>, next_id: &mut u64, frame: usize, region: &FeatureSet) -> u64 {
    let id = *next_id;
    *next_id += 1;
    cells.push(TrackedCell {
        id,
        status: CellStatus::New,
        features: region.clone(),
        centroid: region.centroid,
        previous: None,
        last_seen: frame,
        trajectory: vec![TrajectoryPoint {
            frame,
            position: region.centroid,
            status: CellStatus::New,
        }],
    });
    id
}

/// Applies an association list to the cell list.
///
/// Rules run in order: matched cells become active with their features
/// replaced; new-column regions start new cells; occlusion-column regions
/// absorb every unassociated cell seen in the previous frame within `d0`,
/// which become occluded at the region centroid with frozen features.
/// Cells from the previous frame still unassociated after that go out if
/// within `d0` of the border, otherwise they take the nearest region that
/// no existing cell claimed. Occlusion regions that end up with no cell
/// start a new one.
pub fn update_list(
    cells: &mut Vec<TrackedCell>,
    regions: &[FeatureSet],
    zeta: &[usize],
    params: &TrackerParams,
    frame: FrameContext,
    next_id: &mut u64,
) -> Result<FrameUpdate> {
    let n2 = cells.len();
    if zeta.len() != regions.len() || zeta.iter().any(|&j| j > n2 + 1) {
        return Err(Error::InvalidConfig("association list does not fit the matrix".into()));
    }
    let k = frame.index;
    let seen_before: Vec<bool> = cells.iter().map(|c| c.seen_before(k)).collect();
    let mut associated = vec![false; n2];
    let mut claimed = vec![false; regions.len()];
    let mut update = FrameUpdate {
        region_cells: vec![Vec::new(); regions.len()],
        ..FrameUpdate::default()
    };

    // (a) matched
    for (i, &j) in zeta.iter().enumerate() {
        if j < n2 {
            if associated[j] {
                return Err(Error::InvalidConfig(format!("list column {j} used twice")));
            }
            associated[j] = true;
            claimed[i] = true;
            place(&mut cells[j], k, &regions[i], CellStatus::Active);
            update.region_cells[i].push(cells[j].id);
        }
    }

    // (b) new
    for (i, &j) in zeta.iter().enumerate() {
        if j == n2 {
            let id = spawn(cells, next_id, k, &regions[i]);
            update.region_cells[i].push(id);
        }
    }

    // (c) occlusion
    for (i, &j) in zeta.iter().enumerate() {
        if j != n2 + 1 {
            continue;
        }
        let c = regions[i].centroid;
        for (jj, cell) in cells[..n2].iter_mut().enumerate() {
            if associated[jj] || !seen_before[jj] || cell.centroid.distance(c) > params.d0 {
                continue;
            }
            associated[jj] = true;
            claimed[i] = true;
            cell.status = CellStatus::Occluded;
            cell.centroid = c;
            cell.previous = Some(c);
            cell.last_seen = k;
            cell.trajectory.push(TrajectoryPoint {
                frame: k,
                position: c,
                status: CellStatus::Occluded,
            });
            update.region_cells[i].push(cell.id);
        }
    }

    // (d) leftovers from the previous frame
    for j in 0..n2 {
        if associated[j] || !seen_before[j] {
            continue;
        }
        let pos = cells[j].centroid;
        if border_distance(pos, frame.width, frame.height) <= params.d0 {
            cells[j].status = CellStatus::Out;
            update.exited.push(cells[j].id);
            continue;
        }
        let nearest = (0..regions.len())
            .filter(|&i| zeta[i] == n2 + 1 && !claimed[i])
            .min_by(|&a, &b| {
                pos.distance_sq(regions[a].centroid)
                    .total_cmp(&pos.distance_sq(regions[b].centroid))
            });
        match nearest {
            Some(i) => {
                claimed[i] = true;
                associated[j] = true;
                place(&mut cells[j], k, &regions[i], CellStatus::Active);
                update.region_cells[i].push(cells[j].id);
            }
            None => update.stranded.push(cells[j].id),
        }
    }

    // Occlusion regions nobody claimed.
    for (i, &j) in zeta.iter().enumerate() {
        if j == n2 + 1 && !claimed[i] {
            let id = spawn(cells, next_id, k, &regions[i]);
            update.region_cells[i].push(id);
        }
    }
    Ok(update)
}

/// Sequential tracker: one call to [`Tracker::step`] per frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    t1: DecisionTree,
    t2: DecisionTree,
    width: usize,
    height: usize,
    cells: Vec<TrackedCell>,
    next_id: u64,
    last_frame: Option<usize>,
}

/// Per-frame result of [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub matrix: Option<AssociationMatrix>,
    pub zeta: Vec<usize>,
    pub update: FrameUpdate,
}

impl Tracker {
    pub fn new(
        params: TrackerParams,
        t1: DecisionTree,
        t2: DecisionTree,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            t1,
            t2,
            width,
            height,
            cells: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn cells(&self) -> &[TrackedCell] {
        &self.cells
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn step(&mut self, frame_index: usize, regions: &[FeatureSet]) -> Result<StepOutcome> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::InvalidFrame(format!(
                    "frame {frame_index} does not follow frame {last}"
                )));
            }
        }
        let frame = FrameContext {
            index: frame_index,
            width: self.width,
            height: self.height,
        };
        let first = self.last_frame.is_none();
        self.last_frame = Some(frame_index);

        if first {
            let mut update = FrameUpdate::default();
            for region in regions {
                let id = spawn(&mut self.cells, &mut self.next_id, frame_index, region);
                update.region_cells.push(vec![id]);
            }
            return Ok(StepOutcome {
                matrix: None,
                zeta: Vec::new(),
                update,
            });
        }

        let matrix = build_matrix(regions, &self.cells, &self.t1, &self.t2, &self.params, frame)?;
        let zeta = modified_hungarian(&matrix).zeta;
        let update = update_list(
            &mut self.cells,
            regions,
            &zeta,
            &self.params,
            frame,
            &mut self.next_id,
        )?;
        Ok(StepOutcome {
            matrix: Some(matrix),
            zeta,
            update,
        })
    }

    /// Cells with a position in `frame`, sorted by id.
    pub fn positions_at(&self, frame: usize) -> Vec<&TrackedCell> {
        let mut out: Vec<_> = self.cells.iter().filter(|c| c.last_seen == frame).collect();
        out.sort_by_key(|c| c.id);
        out
    }
}
