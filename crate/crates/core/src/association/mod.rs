//! Frame-to-frame association of segmented regions with tracked cells.
//!
//! For `N1` regions and `N2` listed cells the association matrix has
//! `N2 + 2` columns: one per listed cell, then a "new cell" column and an
//! "occlusion" column. The two trailing sink columns may absorb any number
//! of rows, while each list column is used at most once.

mod hungarian;
mod solver;
mod tracker;

pub use hungarian::standard_hungarian;
pub use solver::{brute_force_assignment, modified_hungarian, objective, Association, ORACLE_LIMIT};
pub use tracker::{update_list, FrameUpdate, StepOutcome, Tracker};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::features::{diff_vector, FeatureSet, Point, TrackRef, DIFF_DIM, TRUNCATED_DIM};

/// Marker for an association that is ruled out.
pub const FORBIDDEN: f64 = -1.0;
/// Value a forbidden entry takes inside the assignment solve.
pub const FORBIDDEN_COST: f64 = -1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Active,
    Occluded,
    Out,
    New,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Active => "active",
            CellStatus::Occluded => "occluded",
            CellStatus::Out => "out",
            CellStatus::New => "new",
        }
    }
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CellStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(CellStatus::Active),
            "occluded" => Ok(CellStatus::Occluded),
            "out" => Ok(CellStatus::Out),
            "new" => Ok(CellStatus::New),
            other => Err(Error::parse("cell status", format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub frame: usize,
    pub position: Point,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedCell {
    pub id: u64,
    pub status: CellStatus,
    /// Features of the last region this cell was matched to. Frozen while
    /// the cell is occluded.
    pub features: FeatureSet,
    pub centroid: Point,
    /// Centroid one frame before `centroid`, if the cell was seen then.
    pub previous: Option<Point>,
    pub last_seen: usize,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl TrackedCell {
    pub fn track_ref(&self) -> TrackRef<'_> {
        TrackRef {
            features: &self.features,
            centroid: self.centroid,
            previous: self.previous,
        }
    }

    pub fn predicted(&self) -> Point {
        self.track_ref().predicted()
    }

    /// Whether the cell has a position in frame `frame - 1`.
    pub fn seen_before(&self, frame: usize) -> bool {
        frame > 0 && self.last_seen == frame - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Weight on out-of-frame re-association through the truncated tree.
    pub alpha1: f64,
    /// Weight on the new-cell column.
    pub alpha2: f64,
    /// Weight on the occlusion column.
    pub alpha3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Maximum cell speed in pixels per frame.
    pub d0: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            alpha1: 0.1,
            alpha2: 0.1,
            alpha3: 0.8,
            lambda1: 0.00008,
            lambda2: 0.00005,
            d0: 70.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.alpha1) && unit(self.alpha2) && unit(self.alpha3)) {
            return Err(Error::InvalidConfig("alpha1..3 must lie in (0, 1)".into()));
        }
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0 && self.d0 > 0.0) {
            return Err(Error::InvalidConfig("lambda1, lambda2 and d0 must be positive".into()));
        }
        Ok(())
    }
}

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `N1 x (N2 + 2)` confidences between current regions and listed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    values: Matrix,
    list_cols: usize,
}

impl AssociationMatrix {
    pub fn new(regions: usize, list_cols: usize) -> Self {
        Self {
            values: Matrix::zeros(regions, list_cols + 2),
            list_cols,
        }
    }

    /// Panics unless every row has `list_cols + 2` entries.
    pub fn from_rows(list_cols: usize, rows: &[Vec<f64>]) -> Self {
        let values = Matrix::from_rows(rows);
        assert!(rows.is_empty() || values.cols() == list_cols + 2);
        let values = if rows.is_empty() {
            Matrix::zeros(0, list_cols + 2)
        } else {
            values
        };
        Self { values, list_cols }
    }

    pub fn regions(&self) -> usize {
        self.values.rows()
    }

    /// `N2`, the number of listed cells.
    pub fn list_cols(&self) -> usize {
        self.list_cols
    }

    pub fn new_col(&self) -> usize {
        self.list_cols
    }

    pub fn occlusion_col(&self) -> usize {
        self.list_cols + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values.set(i, j, v);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Entry as seen by the solver: forbidden markers in the list and
    /// new-cell columns become [`FORBIDDEN_COST`]. The occlusion column
    /// carries signed values and is never a marker.
    pub fn working(&self, i: usize, j: usize) -> f64 {
        let v = self.values.get(i, j);
        if j <= self.list_cols && v == FORBIDDEN {
            FORBIDDEN_COST
        } else {
            v
        }
    }
}

/// Distance from `p` to the nearest edge of a `width x height` frame.
pub fn border_distance(p: Point, width: usize, height: usize) -> f64 {
    p.x.min(p.y)
        .min(width as f64 - p.x)
        .min(height as f64 - p.y)
        .max(0.0)
}

/// Inputs shared by matrix construction and list updates.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext {
    pub index: usize,
    pub width: usize,
    pub height: usize,
}

pub fn build_matrix(
    regions: &[FeatureSet],
    cells: &[TrackedCell],
    t1: &DecisionTree,
    t2: &DecisionTree,
    params: &TrackerParams,
    frame: FrameContext,
) -> Result<AssociationMatrix> {
    if t1.dim != DIFF_DIM {
        return Err(Error::Dimensionality {
            expected: DIFF_DIM,
            got: t1.dim,
        });
    }
    if t2.dim != TRUNCATED_DIM {
        return Err(Error::Dimensionality {
            expected: TRUNCATED_DIM,
            got: t2.dim,
        });
    }
    let n2 = cells.len();
    let mut a = AssociationMatrix::new(regions.len(), n2);
    let predicted: Vec<Point> = cells
        .iter()
        .filter(|c| c.seen_before(frame.index))
        .map(TrackedCell::predicted)
        .collect();

    for (i, region) in regions.iter().enumerate() {
        let db = border_distance(region.centroid, frame.width, frame.height);
        let near_border = db <= params.d0;

        for (j, cell) in cells.iter().enumerate() {
            let v = diff_vector(region, &cell.track_ref());
            let value = match cell.status {
                CellStatus::Active | CellStatus::New | CellStatus::Occluded => t1.classify(&v.0)?,
                CellStatus::Out if near_border => params.alpha1 * t2.classify(&v.truncate().0)?,
                CellStatus::Out => FORBIDDEN,
            };
            a.set(i, j, value);
        }

        let new_value = if near_border {
            params.alpha2 * (-params.lambda1 * db * db).exp()
        } else {
            FORBIDDEN
        };
        a.set(i, n2, new_value);

        let expected: f64 = predicted
            .iter()
            .map(|p| (-params.lambda2 * region.centroid.distance_sq(*p)).exp())
            .sum();
        // Includes the region itself, contributing exp(0) = 1.
        let observed: f64 = regions
            .iter()
            .map(|other| (-params.lambda2 * region.centroid.distance_sq(other.centroid)).exp())
            .sum();
        a.set(i, n2 + 1, params.alpha3 * (expected - observed));
    }
    Ok(a)
}
