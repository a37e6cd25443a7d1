//! Synthetic grayscale sequences of moving elliptical cells with ground
//! truth, used to label training pairs and to score tracking.
//!
//! Cells wander with a bounded turn rate and bounce off a margin inside
//! the frame. Two kinds of scripted events override the wandering: a
//! fly-by steers two cells through a common point so their bodies merge
//! for a few frames, and an exit drives a cell straight out through the
//! nearest border, keeps it hidden, then brings it back in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Point;
use crate::segmentation::GrayFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub n_cells: usize,
    /// Pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Cell area in pixels.
    pub area_min: f64,
    pub area_max: f64,
    /// Major/minor axis ratio range.
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub background: u8,
    /// Amplitude of the fixed background texture.
    pub texture: f64,
    /// Cell intensity above the background at the cell centre.
    pub contrast_min: f64,
    pub contrast_max: f64,
    /// Fraction of the contrast lost at the cell rim.
    pub falloff: f64,
    pub noise_sigma: f64,
    /// Maximum heading change per frame, radians.
    pub turn_rate: f64,
    /// Per-frame probability of starting a random fly-by.
    pub occlusion_rate: f64,
    /// In-frame pixels a cell needs to count as visible.
    pub min_visible_area: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 512,
            frames: 200,
            n_cells: 10,
            speed_min: 5.0,
            speed_max: 40.0,
            area_min: 150.0,
            area_max: 400.0,
            aspect_min: 1.3,
            aspect_max: 2.2,
            background: 90,
            texture: 12.0,
            contrast_min: 45.0,
            contrast_max: 120.0,
            falloff: 0.5,
            noise_sigma: 4.0,
            turn_rate: 0.2,
            occlusion_rate: 0.02,
            min_visible_area: 50,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.width < 16 || self.height < 16 {
            return bad("frames must be at least 16x16");
        }
        if self.frames == 0 {
            return bad("frames must be >= 1");
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return bad("speed range must be positive and ordered");
        }
        if !(self.area_min > 0.0 && self.area_min <= self.area_max) {
            return bad("area range must be positive and ordered");
        }
        if !(self.aspect_min >= 1.0 && self.aspect_min <= self.aspect_max) {
            return bad("aspect range must be >= 1 and ordered");
        }
        if !(self.contrast_min >= 0.0 && self.contrast_min <= self.contrast_max) {
            return bad("contrast range must be non-negative and ordered");
        }
        if !(0.0..=1.0).contains(&self.falloff) || !(0.0..=1.0).contains(&self.occlusion_rate) {
            return bad("falloff and occlusion_rate must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.turn_rate >= 0.0 && self.texture >= 0.0) {
            return bad("noise_sigma, turn_rate and texture must be non-negative");
        }
        let diameter = 2.0 * (self.area_max * self.aspect_max / std::f64::consts::PI).sqrt();
        if diameter + 10.0 >= self.width.min(self.height) as f64 / 2.0 {
            return bad("cells too large for the frame");
        }
        Ok(())
    }
}

/// Explicit starting state for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSeed {
    pub position: Point,
    pub velocity: Point,
    pub area: f64,
    pub aspect: f64,
    pub contrast: f64,
}

/// Two cells steered through a common point starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlyBy {
    pub start: usize,
    pub a: usize,
    pub b: usize,
}

/// A cell that leaves through the nearest border at `start` and comes
/// back `away` frames after it is fully outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exit {
    pub start: usize,
    pub cell: usize,
    pub away: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    /// Per-cell overrides, by cell index.
    pub seeds: Vec<(usize, CellSeed)>,
    pub fly_bys: Vec<FlyBy>,
    pub exits: Vec<Exit>,
    /// Disable heading and speed jitter; cells keep their velocity.
    pub constant_velocity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthCell {
    pub id: u64,
    /// Mean of the in-frame member pixels (the ellipse centre if none).
    pub centroid: Point,
    pub visible: bool,
    /// Linear indices `y * width + x` of in-frame member pixels.
    pub pixels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    /// Per frame, every cell that is on screen (possibly partially).
    pub frames: Vec<Vec<TruthCell>>,
    /// Per frame, id pairs `(low, high)` of visible cells whose bodies
    /// share at least one pixel.
    pub overlaps: Vec<Vec<(u64, u64)>>,
}

impl GroundTruth {
    /// Maximal runs of consecutive frames in which a pair overlaps, as
    /// `(a, b, first, last)`.
    pub fn overlap_events(&self) -> Vec<(u64, u64, usize, usize)> {
        let mut open: Vec<(u64, u64, usize, usize)> = Vec::new();
        let mut done = Vec::new();
        for (f, now) in self.overlaps.iter().enumerate() {
            let (still, ended): (Vec<_>, Vec<_>) = open
                .into_iter()
                .partition(|&(a, b, _, _)| now.contains(&(a, b)));
            done.extend(ended);
            open = still.into_iter().map(|(a, b, s, _)| (a, b, s, f)).collect();
            for &(a, b) in now {
                if !open.iter().any(|&(x, y, _, _)| (x, y) == (a, b)) {
                    open.push((a, b, f, f));
                }
            }
        }
        done.extend(open);
        done.sort_by_key(|&(a, b, s, _)| (s, a, b));
        done
    }
}

/// Pairs of visible cells whose pixel sets intersect.
pub fn overlapping_pairs(cells: &[TruthCell]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            if a.visible && b.visible && intersects(&a.pixels, &b.pixels) {
                out.push((a.id.min(b.id), a.id.max(b.id)));
            }
        }
    }
    out.sort_unstable();
    out
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    // Both are sorted ascending.
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<GrayFrame>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Free,
    /// Straight flight until the given frame.
    Straight { until: usize },
    Exiting { away: usize },
    Hidden { until: usize },
    Entering,
}

#[derive(Debug, Clone)]
struct SimCell {
    pos: Point,
    vel: Point,
    semi_major: f64,
    semi_minor: f64,
    contrast: f64,
    mode: Mode,
    /// Orientation, kept from the last non-zero velocity.
    angle: f64,
}

impl SimCell {
    fn margin(&self) -> f64 {
        self.semi_major + 4.0
    }

    fn speed(&self) -> f64 {
        (self.vel.x * self.vel.x + self.vel.y * self.vel.y).sqrt()
    }

    fn inside_box(&self, w: f64, h: f64) -> bool {
        let m = self.margin();
        self.pos.x >= m && self.pos.x <= w - m && self.pos.y >= m && self.pos.y <= h - m
    }

    fn fully_outside(&self, w: f64, h: f64) -> bool {
        let r = self.semi_major + 1.0;
        self.pos.x < -r || self.pos.y < -r || self.pos.x > w + r || self.pos.y > h + r
    }
}

fn shape(area: f64, aspect: f64) -> (f64, f64) {
    let major = (area * aspect / std::f64::consts::PI).sqrt();
    (major, area / (std::f64::consts::PI * major))
}

fn background_value(cfg: &SynthConfig, x: usize, y: usize) -> f64 {
    let fx = x as f64 / cfg.width as f64;
    let fy = y as f64 / cfg.height as f64;
    cfg.background as f64
        + cfg.texture * (0.6 * (7.0 * fx + 3.0 * fy).sin() + 0.4 * (11.0 * fy - 5.0 * fx).cos())
}

pub fn generate_sequence(config: &SynthConfig) -> Result<Sequence> {
    generate_scripted(config, &Script::default())
}

pub fn generate_scripted(config: &SynthConfig, script: &Script) -> Result<Sequence> {
    config.validate()?;
    for e in &script.fly_bys {
        if e.a == e.b || e.a >= config.n_cells || e.b >= config.n_cells {
            return Err(Error::InvalidConfig(format!("bad fly-by {e:?}")));
        }
    }
    for e in &script.exits {
        if e.cell >= config.n_cells {
            return Err(Error::InvalidConfig(format!("bad exit {e:?}")));
        }
    }
    let (w, h) = (config.width as f64, config.height as f64);
    let mut motion = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut cells = spawn_cells(config, script, &mut motion);
    let background: Vec<f64> = (0..config.height)
        .flat_map(|y| (0..config.width).map(move |x| (x, y)))
        .map(|(x, y)| background_value(config, x, y))
        .collect();

    let mut frames = Vec::with_capacity(config.frames);
    let mut truth = GroundTruth {
        width: config.width,
        height: config.height,
        frames: Vec::with_capacity(config.frames),
        overlaps: Vec::with_capacity(config.frames),
    };

    for k in 0..config.frames {
        if k > 0 {
            start_events(config, script, k, &mut cells, &mut motion);
            for cell in cells.iter_mut() {
                advance(config, script, k, cell, &mut motion, w, h);
            }
        }
        let (frame, cells_truth) = render(config, k, &cells, &background, &noise, &mut noise_rng)?;
        frames.push(frame);
        truth.overlaps.push(overlapping_pairs(&cells_truth));
        truth.frames.push(cells_truth);
    }
    Ok(Sequence { frames, truth })
}

fn spawn_cells(config: &SynthConfig, script: &Script, rng: &mut ChaCha8Rng) -> Vec<SimCell> {
    let (w, h) = (config.width as f64, config.height as f64);
    let mut cells: Vec<SimCell> = Vec::with_capacity(config.n_cells);
    for idx in 0..config.n_cells {
        let area = rng.random_range(config.area_min..=config.area_max);
        let aspect = rng.random_range(config.aspect_min..=config.aspect_max);
        let contrast = rng.random_range(config.contrast_min..=config.contrast_max);
        let speed = rng.random_range(config.speed_min..=config.speed_max);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let (major, minor) = shape(area, aspect);
        let m = major + 4.0;
        // Keep initial bodies apart.
        let mut pos = Point::new(w / 2.0, h / 2.0);
        for _ in 0..200 {
            pos = Point::new(rng.random_range(m..w - m), rng.random_range(m..h - m));
            if cells
                .iter()
                .all(|c| c.pos.distance(pos) > c.semi_major + major + 12.0)
            {
                break;
            }
        }
        let mut cell = SimCell {
            pos,
            vel: Point::new(speed * heading.cos(), speed * heading.sin()),
            semi_major: major,
            semi_minor: minor,
            contrast,
            mode: Mode::Free,
            angle: heading,
        };
        if let Some((_, seed)) = script.seeds.iter().find(|(i, _)| *i == idx) {
            let (major, minor) = shape(seed.area, seed.aspect);
            cell.pos = seed.position;
            cell.vel = seed.velocity;
            cell.semi_major = major;
            cell.semi_minor = minor;
            cell.contrast = seed.contrast;
            if seed.velocity != Point::default() {
                cell.angle = seed.velocity.y.atan2(seed.velocity.x);
            }
        }
        cells.push(cell);
    }
    cells
}

fn start_events(config: &SynthConfig, script: &Script, k: usize, cells: &mut [SimCell], rng: &mut ChaCha8Rng) {
    let (w, h) = (config.width as f64, config.height as f64);
    let mut pairs: Vec<(usize, usize)> = script
        .fly_bys
        .iter()
        .filter(|e| e.start == k)
        .map(|e| (e.a, e.b))
        .collect();
    if config.occlusion_rate > 0.0 && cells.len() >= 2 && rng.random_bool(config.occlusion_rate) {
        let a = rng.random_range(0..cells.len());
        let b = (a + rng.random_range(1..cells.len())) % cells.len();
        pairs.push((a, b));
    }
    for (a, b) in pairs {
        if cells[a].mode != Mode::Free || cells[b].mode != Mode::Free {
            continue;
        }
        let (pa, pb) = (cells[a].pos, cells[b].pos);
        let mid = Point::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0);
        let dist = pa.distance(pb);
        // Offset the meeting point sideways so the paths cross at an angle.
        let (nx, ny) = if dist > 0.0 {
            (-(pb.y - pa.y) / dist, (pb.x - pa.x) / dist)
        } else {
            (1.0, 0.0)
        };
        let side = rng.random_range(-0.3..0.3) * dist;
        let m = cells[a].margin().max(cells[b].margin());
        let meet = Point::new(
            (mid.x + nx * side).clamp(m, w - m),
            (mid.y + ny * side).clamp(m, h - m),
        );
        let nominal = 0.5 * (cells[a].speed() + cells[b].speed());
        let far = pa.distance(meet).max(pb.distance(meet));
        let frames = (far / nominal)
            .max(far / config.speed_max)
            .ceil()
            .max(3.0) as usize;
        let linger = frames.max(6);
        for (idx, p) in [(a, pa), (b, pb)] {
            let mut vel = Point::new((meet.x - p.x) / frames as f64, (meet.y - p.y) / frames as f64);
            let s = (vel.x * vel.x + vel.y * vel.y).sqrt();
            if s < config.speed_min {
                // Too close already: pass through at the minimum speed.
                let ang = if s > 0.0 {
                    vel.y.atan2(vel.x)
                } else {
                    rng.random_range(0.0..std::f64::consts::TAU)
                };
                vel = Point::new(config.speed_min * ang.cos(), config.speed_min * ang.sin());
            }
            cells[idx].vel = vel;
            cells[idx].mode = Mode::Straight {
                until: k + frames + linger,
            };
        }
    }
    for e in script.exits.iter().filter(|e| e.start == k) {
        let cell = &mut cells[e.cell];
        if !matches!(cell.mode, Mode::Free | Mode::Straight { .. }) {
            continue;
        }
        let p = cell.pos;
        let s = cell.speed().max(config.speed_min);
        let options = [(p.x, Point::new(-s, 0.0)), (w - p.x, Point::new(s, 0.0)), (p.y, Point::new(0.0, -s)), (h - p.y, Point::new(0.0, s))];
        let (_, vel) = options
            .iter()
            .copied()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((0.0, Point::new(s, 0.0)));
        cell.vel = vel;
        cell.mode = Mode::Exiting { away: e.away };
        cell.angle = vel.y.atan2(vel.x);
    }
}

fn advance(config: &SynthConfig, script: &Script, k: usize, cell: &mut SimCell, rng: &mut ChaCha8Rng, w: f64, h: f64) {
    match cell.mode {
        Mode::Hidden { until } => {
            if k >= until {
                // Re-enter from a random border point, heading inward.
                let speed = rng.random_range(config.speed_min..=config.speed_max).min(20.0);
                let r = cell.semi_major + 1.0;
                let side = rng.random_range(0..4);
                let (pos, dir) = match side {
                    0 => (Point::new(-r, rng.random_range(0.25 * h..0.75 * h)), 0.0f64),
                    1 => (Point::new(w + r, rng.random_range(0.25 * h..0.75 * h)), std::f64::consts::PI),
                    2 => (Point::new(rng.random_range(0.25 * w..0.75 * w), -r), std::f64::consts::FRAC_PI_2),
                    _ => (Point::new(rng.random_range(0.25 * w..0.75 * w), h + r), -std::f64::consts::FRAC_PI_2),
                };
                cell.pos = pos;
                cell.vel = Point::new(speed * dir.cos(), speed * dir.sin());
                cell.angle = dir;
                cell.mode = Mode::Entering;
            }
            return;
        }
        Mode::Free if !script.constant_velocity => {
            let heading = cell.vel.y.atan2(cell.vel.x) + rng.random_range(-config.turn_rate..=config.turn_rate);
            let speed = (cell.speed() + rng.random_range(-1.0..=1.0)).clamp(config.speed_min, config.speed_max);
            cell.vel = Point::new(speed * heading.cos(), speed * heading.sin());
        }
        Mode::Straight { until } if k >= until => cell.mode = Mode::Free,
        _ => {}
    }

    cell.pos.x += cell.vel.x;
    cell.pos.y += cell.vel.y;
    if cell.speed() > 0.0 {
        cell.angle = cell.vel.y.atan2(cell.vel.x);
    }

    match cell.mode {
        Mode::Exiting { away } => {
            if cell.fully_outside(w, h) {
                cell.mode = Mode::Hidden { until: k + away };
            }
        }
        Mode::Entering => {
            if cell.inside_box(w, h) {
                cell.mode = Mode::Free;
            }
        }
        _ => bounce(cell, w, h),
    }
}

fn bounce(cell: &mut SimCell, w: f64, h: f64) {
    let m = cell.margin();
    if cell.pos.x < m {
        cell.pos.x = 2.0 * m - cell.pos.x;
        cell.vel.x = cell.vel.x.abs();
    } else if cell.pos.x > w - m {
        cell.pos.x = 2.0 * (w - m) - cell.pos.x;
        cell.vel.x = -cell.vel.x.abs();
    }
    if cell.pos.y < m {
        cell.pos.y = 2.0 * m - cell.pos.y;
        cell.vel.y = cell.vel.y.abs();
    } else if cell.pos.y > h - m {
        cell.pos.y = 2.0 * (h - m) - cell.pos.y;
        cell.vel.y = -cell.vel.y.abs();
    }
}

fn render(
    config: &SynthConfig,
    k: usize,
    cells: &[SimCell],
    background: &[f64],
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(GrayFrame, Vec<TruthCell>)> {
    let (w, h) = (config.width, config.height);
    let mut canvas = background.to_vec();
    let mut truth = Vec::new();
    for (idx, cell) in cells.iter().enumerate() {
        if matches!(cell.mode, Mode::Hidden { .. }) {
            continue;
        }
        let (cos, sin) = (cell.angle.cos(), cell.angle.sin());
        let r = cell.semi_major.ceil() as i64 + 1;
        let cx = cell.pos.x.floor() as i64;
        let cy = cell.pos.y.floor() as i64;
        let (fx, fy) = (cell.pos.x - cx as f64, cell.pos.y - cy as f64);
        let mut pixels = Vec::new();
        let (mut sx, mut sy) = (0.0, 0.0);
        for oy in -r..=r {
            let y = cy + oy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for ox in -r..=r {
                let x = cx + ox;
                if x < 0 || x >= w as i64 {
                    continue;
                }
                let dx = ox as f64 - fx;
                let dy = oy as f64 - fy;
                let u = (dx * cos + dy * sin) / cell.semi_major;
                let v = (-dx * sin + dy * cos) / cell.semi_minor;
                let rho2 = u * u + v * v;
                if rho2 > 1.0 {
                    continue;
                }
                let i = y as usize * w + x as usize;
                let value = background[i] + cell.contrast * (1.0 - config.falloff * rho2);
                canvas[i] = canvas[i].max(value);
                pixels.push(i as u32);
                sx += x as f64;
                sy += y as f64;
            }
        }
        if pixels.is_empty() {
            continue;
        }
        pixels.sort_unstable();
        let n = pixels.len() as f64;
        truth.push(TruthCell {
            id: idx as u64 + 1,
            centroid: Point::new(sx / n, sy / n),
            visible: pixels.len() >= config.min_visible_area,
            pixels,
        });
    }
    let pixels = canvas
        .into_iter()
        .map(|v| {
            let noisy = if config.noise_sigma > 0.0 {
                v + noise.sample(rng)
            } else {
                v
            };
            noisy.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok((GrayFrame::new(w, h, k, pixels)?, truth))
}
