//! Per-region shape and intensity features and the 23-entry difference
//! vector used to compare a current region with a tracked cell.
//!
//! Central moments are accumulated exactly in integer arithmetic on the
//! scaled deviations `N*I - sum(I)` so that odd moments of near-symmetric
//! regions do not pick up cancellation noise before their roots are taken.

use crate::error::{Error, Result};
use crate::segmentation::{Region, RegionPixel};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Orders of the central-moment roots `M_n`.
pub const MOMENT_ORDERS: [u32; 4] = [3, 4, 5, 6];
/// Orders of the normalized inertia `J_n` and polynomial feature `P_n`.
pub const INERTIA_ORDERS: [f64; 4] = [1.0, 2.0, 3.0, 0.5];
/// Widths of the Gaussian feature `G_n`.
pub const GAUSS_ORDERS: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

/// Number of entries in a full difference vector.
pub const DIFF_DIM: usize = 23;
/// Number of entries once the two position entries are dropped.
pub const TRUNCATED_DIM: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub area: usize,
    pub centroid: Point,
    pub mean: f64,
    /// `(1/N) * sqrt(sum (I - mean)^2)`. Note the `1/N` sits outside the
    /// root, so this is not the usual population standard deviation.
    pub stddev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    /// `M_n` for n = 3, 4, 5, 6. Odd orders keep the sign of the moment.
    pub moment_roots: [f64; 4],
    /// `J_n` for n = 1, 2, 3, 0.5.
    pub inertia: [f64; 4],
    /// `P_n` for n = 1, 2, 3, 0.5.
    pub poly: [f64; 4],
    /// `G_n` for n = 2, 4, 6, 8.
    pub gauss: [f64; 4],
}

pub fn extract_features(region: &Region) -> Result<FeatureSet> {
    features_from_pixels(&region.pixels)
}

pub fn features_from_pixels(pixels: &[RegionPixel]) -> Result<FeatureSet> {
    if pixels.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = pixels.len() as i64;
    let nf = n as f64;

    let (mut sx, mut sy, mut si) = (0i64, 0i64, 0i64);
    for p in pixels {
        sx += p.x as i64;
        sy += p.y as i64;
        si += p.intensity as i64;
    }
    let centroid = Point::new(sx as f64 / nf, sy as f64 / nf);
    let mean = si as f64 / nf;

    // sums[k] = sum (N*I - S)^(k+2), k = 0..=4, i.e. orders 2..=6.
    let sums = scaled_moment_sums(pixels, n, si);
    let central = |order: usize| sums[order - 2] / nf.powi(order as i32 + 1);

    let stddev = sums[0].sqrt() / (nf * nf);
    let (skewness, kurtosis, moment_roots) = if stddev == 0.0 {
        (0.0, 0.0, [0.0; 4])
    } else {
        let m3 = central(3);
        let m4 = central(4);
        let roots = MOMENT_ORDERS.map(|order| {
            let m = central(order as usize);
            m.signum() * m.abs().powf(1.0 / order as f64)
        });
        (m3 / stddev.powi(3), m4 / stddev.powi(4), roots)
    };

    let mut inertia = [0.0; 4];
    let mut poly = [0.0; 4];
    let mut gauss = [0.0; 4];
    for p in pixels {
        let ex = (n * p.x as i64 - sx) as f64;
        let ey = (n * p.y as i64 - sy) as f64;
        // Squared distance to the centroid, scaled by N^2.
        let q = ex * ex + ey * ey;
        let intensity = p.intensity as f64;
        for (k, &order) in INERTIA_ORDERS.iter().enumerate() {
            let dist_pow = q.powf(order / 2.0) / nf.powf(order);
            inertia[k] += dist_pow;
            poly[k] += dist_pow * intensity;
        }
        let d2 = q / (nf * nf);
        for (k, &width) in GAUSS_ORDERS.iter().enumerate() {
            gauss[k] += (-d2 / (2.0 * width * width)).exp() * intensity;
        }
    }
    for (k, &order) in INERTIA_ORDERS.iter().enumerate() {
        let norm = nf.powf(1.0 + order / 2.0);
        inertia[k] /= norm;
        poly[k] /= norm;
    }
    for g in &mut gauss {
        *g /= nf;
    }

    Ok(FeatureSet {
        area: pixels.len(),
        centroid,
        mean,
        stddev,
        skewness,
        kurtosis,
        moment_roots,
        inertia,
        poly,
        gauss,
    })
}

fn scaled_moment_sums(pixels: &[RegionPixel], n: i64, si: i64) -> [f64; 5] {
    let exact = || -> Option<[i128; 5]> {
        let mut acc = [0i128; 5];
        for p in pixels {
            let e = (n * p.intensity as i64 - si) as i128;
            let mut power = e;
            for slot in acc.iter_mut() {
                power = power.checked_mul(e)?;
                *slot = slot.checked_add(power)?;
            }
        }
        Some(acc)
    };
    if let Some(acc) = exact() {
        return acc.map(|v| v as f64);
    }
    // Very large regions: plain two-pass floating point.
    let si = si as f64;
    let nf = n as f64;
    let mut acc = [0.0; 5];
    for p in pixels {
        let e = nf * p.intensity as f64 - si;
        let mut power = e;
        for slot in acc.iter_mut() {
            power *= e;
            *slot += power;
        }
    }
    acc
}

/// Constant-velocity extrapolation `2*prev - prev2`.
pub fn predict_center(prev: Point, prev2: Point) -> Point {
    Point::new(2.0 * prev.x - prev2.x, 2.0 * prev.y - prev2.y)
}

/// What a difference vector needs to know about a tracked cell.
#[derive(Debug, Clone, Copy)]
pub struct TrackRef<'a> {
    pub features: &'a FeatureSet,
    /// Position in the previous frame.
    pub centroid: Point,
    /// Position one frame before that, when known.
    pub previous: Option<Point>,
}

impl TrackRef<'_> {
    /// Predicted position in the current frame. Without a second
    /// position the last centroid is used.
    pub fn predicted(&self) -> Point {
        match self.previous {
            Some(prev2) => predict_center(self.centroid, prev2),
            None => self.centroid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffVector(pub [f64; DIFF_DIM]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDiffVector(pub [f64; TRUNCATED_DIM]);

impl DiffVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn truncate(&self) -> TruncatedDiffVector {
        let mut out = [0.0; TRUNCATED_DIM];
        out.copy_from_slice(&self.0[2..]);
        TruncatedDiffVector(out)
    }
}

impl TruncatedDiffVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn truncate(v: &DiffVector) -> TruncatedDiffVector {
    v.truncate()
}

pub fn diff_vector(current: &FeatureSet, tracked: &TrackRef<'_>) -> DiffVector {
    let l = tracked.features;
    let mut v = [0.0; DIFF_DIM];
    v[0] = current.centroid.distance(tracked.predicted());
    v[1] = current.centroid.distance(tracked.centroid);
    v[2] = (current.area as f64 - l.area as f64).abs();
    v[3] = (current.mean - l.mean).abs();
    v[4] = (current.stddev - l.stddev).abs();
    v[5] = (current.skewness - l.skewness).abs();
    v[6] = (current.kurtosis - l.kurtosis).abs();
    let groups = [
        (&current.moment_roots, &l.moment_roots),
        (&current.inertia, &l.inertia),
        (&current.poly, &l.poly),
        (&current.gauss, &l.gauss),
    ];
    for (g, (a, b)) in groups.iter().enumerate() {
        for k in 0..4 {
            v[7 + 4 * g + k] = (a[k] - b[k]).abs();
        }
    }
    DiffVector(v)
}
