//! Background subtraction and connected-region extraction.
//!
//! A static background is estimated as the per-pixel temporal median of the
//! first frames of a sequence. Every frame is then differenced against it,
//! thresholded, hole-filled and split into 8-connected regions.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// An 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    index: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, index: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!(
                "frame {index} has zero extent ({width}x{height})"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "frame {index}: {} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            index,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, index: usize, value: u8) -> Result<Self> {
        Self::new(width, height, index, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    fn check_same_size(&self, other: &GrayFrame) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                want_w: self.width,
                want_h: self.height,
                got_w: other.width,
                got_h: other.height,
            });
        }
        Ok(())
    }
}

/// Per-pixel temporal median over the first `window` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackgroundModel {
    pub image: GrayFrame,
    pub window: usize,
}

/// Binary foreground mask with the same geometry as a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "mask has {} bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionPixel {
    pub x: u32,
    pub y: u32,
    pub intensity: u8,
}

/// Inclusive pixel bounds `(min_x, min_y, max_x, max_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

/// One 8-connected foreground component, carrying the original intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub frame_index: usize,
    pub pixels: Vec<RegionPixel>,
    pub bbox: BoundingBox,
}

impl Region {
    /// Builds a region from raw pixels, computing the tight bounding box.
    pub fn from_pixels(frame_index: usize, pixels: Vec<RegionPixel>) -> Result<Self> {
        let first = pixels.first().ok_or(Error::EmptyRegion)?;
        let mut bbox = BoundingBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in &pixels[1..] {
            bbox.min_x = bbox.min_x.min(p.x);
            bbox.min_y = bbox.min_y.min(p.y);
            bbox.max_x = bbox.max_x.max(p.x);
            bbox.max_y = bbox.max_y.max(p.y);
        }
        Ok(Self {
            frame_index,
            pixels,
            bbox,
        })
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

pub fn compute_background(frames: &[GrayFrame], window: usize) -> Result<BackgroundModel> {
    if window == 0 {
        return Err(Error::InvalidConfig("background window must be >= 1".into()));
    }
    if frames.len() < window {
        return Err(Error::NotEnoughFrames {
            needed: window,
            available: frames.len(),
        });
    }
    let first = &frames[0];
    for f in &frames[1..window] {
        first.check_same_size(f)?;
    }

    let n = first.width * first.height;
    let mut out = vec![0u8; n];
    let mut column = Vec::with_capacity(window);
    for (i, px) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(frames[..window].iter().map(|f| f.pixels[i]));
        column.sort_unstable();
        *px = if window % 2 == 1 {
            column[window / 2]
        } else {
            // Mean of the two middle values, halves rounded away from zero.
            let a = column[window / 2 - 1] as u16;
            let b = column[window / 2] as u16;
            (a + b).div_ceil(2) as u8
        };
    }
    Ok(BackgroundModel {
        image: GrayFrame::new(first.width, first.height, 0, out)?,
        window,
    })
}

pub fn difference_image(frame: &GrayFrame, bg: &BackgroundModel) -> Result<GrayFrame> {
    bg.image.check_same_size(frame)?;
    let pixels = frame
        .pixels
        .iter()
        .zip(&bg.image.pixels)
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    GrayFrame::new(frame.width, frame.height, frame.index, pixels)
}

/// Marks pixels strictly above `threshold`.
pub fn binarize(diff: &GrayFrame, threshold: u8) -> Mask {
    Mask {
        width: diff.width,
        height: diff.height,
        bits: diff.pixels.iter().map(|&v| v > threshold).collect(),
    }
}

/// Otsu's threshold over the 256-bin histogram. Pixels `> t` are foreground.
pub fn otsu_threshold(image: &GrayFrame) -> u8 {
    let mut hist = [0u64; 256];
    for &v in &image.pixels {
        hist[v as usize] += 1;
    }
    let total = image.pixels.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = -1.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..256usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best_t = t as u8;
        }
    }
    best_t
}

/// Fills background pockets that cannot reach the border through
/// 4-connected background pixels.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut reached = vec![false; w * h];
    let mut queue = VecDeque::new();

    let seed = |x: usize, y: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !mask.bits[i] && !reached[i] {
            reached[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut reached, &mut queue);
        seed(x, h - 1, &mut reached, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut reached, &mut queue);
        seed(w - 1, y, &mut reached, &mut queue);
    }

    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !mask.bits[j] && !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }

    Mask {
        width: w,
        height: h,
        bits: reached.into_iter().map(|r| !r).collect(),
    }
}

/// Extracts 8-connected foreground components with at least `min_area`
/// pixels, ordered by their first pixel in raster order.
pub fn connected_components(mask: &Mask, frame: &GrayFrame, min_area: usize) -> Result<Vec<Region>> {
    if mask.width != frame.width || mask.height != frame.height {
        return Err(Error::DimensionMismatch {
            want_w: frame.width,
            want_h: frame.height,
            got_w: mask.width,
            got_h: mask.height,
        });
    }
    let (w, h) = (mask.width, mask.height);
    let mut visited = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !mask.bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push(RegionPixel {
                x: x as u32,
                y: y as u32,
                intensity: frame.pixels[i],
            });
            let x0 = x.saturating_sub(1);
            let x1 = (x + 1).min(w - 1);
            let y0 = y.saturating_sub(1);
            let y1 = (y + 1).min(h - 1);
            for ny in y0..=y1 {
                for nx in x0..=x1 {
                    let j = ny * w + nx;
                    if mask.bits[j] && !visited[j] {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if pixels.len() >= min_area.max(1) {
            pixels.sort_unstable_by_key(|p| (p.y, p.x));
            regions.push(Region::from_pixels(frame.index, pixels)?);
        }
    }
    Ok(regions)
}

/// Threshold and area settings for [`segment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentParams {
    /// Fixed difference threshold; `None` selects Otsu per frame.
    pub threshold: Option<u8>,
    pub min_area: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            threshold: Some(15),
            min_area: 50,
        }
    }
}

/// Full per-frame chain: difference, threshold, hole fill, components.
pub fn segment(frame: &GrayFrame, bg: &BackgroundModel, params: &SegmentParams) -> Result<Vec<Region>> {
    let diff = difference_image(frame, bg)?;
    let threshold = params.threshold.unwrap_or_else(|| otsu_threshold(&diff));
    let mask = fill_holes(&binarize(&diff, threshold));
    connected_components(&mask, frame, params.min_area)
}
