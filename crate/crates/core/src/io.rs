//! File formats: PGM frame directories, CSV pairs, truth and
//! trajectories, and an SVG trajectory plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::association::CellStatus;
use crate::dtree::TrainingSet;
use crate::error::{Error, Result};
use crate::features::Point;
use crate::pipeline::TrajectoryRow;
use crate::segmentation::GrayFrame;
use crate::synth::{GroundTruth, TruthCell};

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    let img = GrayImage::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.pixels().to_vec(),
    )
    .ok_or_else(|| Error::InvalidFrame("pixel buffer does not match size".into()))?;
    img.save_with_format(path, ImageFormat::Pnm)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_pgm(path: &Path, index: usize) -> Result<GrayFrame> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    GrayFrame::new(w as usize, h as usize, index, img.into_raw())
}

/// Writes `frame_NNNNN.pgm` files, creating `dir` if needed.
pub fn write_frames(dir: &Path, frames: &[GrayFrame]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for frame in frames {
        write_pgm(&dir.join(frame_file_name(frame.index())), frame)?;
    }
    Ok(())
}

/// Reads every `.pgm` file in `dir` in name order. Frame indices are
/// positions in that order.
pub fn read_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_pgm(p, i))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        for f in &frames[1..] {
            if (f.width(), f.height()) != (first.width(), first.height()) {
                return Err(Error::DimensionMismatch {
                    want_w: first.width(),
                    want_h: first.height(),
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
    }
    Ok(frames)
}

fn csv_err(context: &str, e: csv::Error) -> Error {
    Error::parse(context, e.to_string())
}

/// Header `v1..v23,y` for full vectors, `v3..v23,y` for truncated ones.
pub fn pairs_header(dim: usize) -> Vec<String> {
    let first = 24 - dim;
    (first..24)
        .map(|i| format!("v{i}"))
        .chain(std::iter::once("y".to_string()))
        .collect()
}

pub fn write_pairs_csv<W: Write>(out: W, set: &TrainingSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(pairs_header(set.dim()))
        .map_err(|e| csv_err("pairs", e))?;
    let mut record = Vec::with_capacity(set.dim() + 1);
    for i in 0..set.len() {
        record.clear();
        record.extend(set.row(i).iter().map(|v| v.to_string()));
        record.push(u8::from(set.label(i)).to_string());
        w.write_record(&record).map_err(|e| csv_err("pairs", e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(input: R) -> Result<TrainingSet> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| csv_err("pairs", e))?.clone();
    let dim = header.len().checked_sub(1).filter(|&d| d > 0 && d <= 23).ok_or_else(|| {
        Error::parse("pairs", format!("unexpected header with {} columns", header.len()))
    })?;
    if header.iter().map(str::to_string).collect::<Vec<_>>() != pairs_header(dim) {
        return Err(Error::parse("pairs", "header must be v<i>... ,y"));
    }
    let mut set = TrainingSet::new(dim);
    let mut row = Vec::with_capacity(dim);
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err("pairs", e))?;
        let line = n + 2;
        row.clear();
        for field in rec.iter().take(dim) {
            row.push(field.trim().parse::<f64>().map_err(|e| {
                Error::parse("pairs", format!("line {line}: {e}"))
            })?);
        }
        let label = match rec.get(dim).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::parse("pairs", format!("line {line}: bad label {other:?}")))
            }
        };
        set.push(&row, label)?;
    }
    Ok(set)
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRecord {
    frame: usize,
    id: u64,
    x: f64,
    y: f64,
    visible: u8,
    /// Ids of visible cells sharing pixels with this one, `|`-separated.
    overlaps: String,
}

/// One row per on-screen cell per frame. Pixel sets are not stored.
pub fn write_truth_csv<W: Write>(out: W, truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, cells) in truth.frames.iter().enumerate() {
        for c in cells {
            let overlaps = truth.overlaps[k]
                .iter()
                .filter_map(|&(a, b)| match (a == c.id, b == c.id) {
                    (true, _) => Some(b),
                    (_, true) => Some(a),
                    _ => None,
                })
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join("|");
            w.serialize(TruthRecord {
                frame: k,
                id: c.id,
                x: c.centroid.x,
                y: c.centroid.y,
                visible: c.visible.into(),
                overlaps,
            })
            .map_err(|e| csv_err("truth", e))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads truth written by [`write_truth_csv`]. `frames` fixes the sequence
/// length, since trailing frames may have no cells; without it the length
/// is one past the last frame mentioned.
pub fn read_truth_csv<R: Read>(
    input: R,
    width: usize,
    height: usize,
    frames: Option<usize>,
) -> Result<GroundTruth> {
    let mut r = csv::Reader::from_reader(input);
    let records = r
        .deserialize::<TruthRecord>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_err("truth", e))?;
    let last = records.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let frames = match frames {
        Some(n) if last > n => return Err(Error::FrameMisalignment { frame: last - 1 }),
        Some(n) => n,
        None => last,
    };
    let mut truth = GroundTruth {
        width,
        height,
        frames: vec![Vec::new(); frames],
        overlaps: vec![Vec::new(); frames],
    };
    for rec in records {
        for other in rec.overlaps.split('|').filter(|s| !s.is_empty()) {
            let other: u64 = other
                .parse()
                .map_err(|e| Error::parse("truth", format!("overlap id: {e}")))?;
            let pair = (rec.id.min(other), rec.id.max(other));
            if !truth.overlaps[rec.frame].contains(&pair) {
                truth.overlaps[rec.frame].push(pair);
            }
        }
        truth.frames[rec.frame].push(TruthCell {
            id: rec.id,
            centroid: Point::new(rec.x, rec.y),
            visible: rec.visible != 0,
            pixels: Vec::new(),
        });
    }
    for o in &mut truth.overlaps {
        o.sort_unstable();
    }
    Ok(truth)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    frame_index: usize,
    cell_id: u64,
    x: f64,
    y: f64,
    status: String,
    area: usize,
}

pub fn write_trajectories_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(TrajectoryRecord {
            frame_index: row.frame,
            cell_id: row.cell_id,
            x: row.position.x,
            y: row.position.y,
            status: row.status.to_string(),
            area: row.area,
        })
        .map_err(|e| csv_err("trajectories", e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<TrajectoryRecord>()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err("trajectories", e))?;
            Ok(TrajectoryRow {
                frame: rec.frame_index,
                cell_id: rec.cell_id,
                position: Point::new(rec.x, rec.y),
                status: rec.status.parse::<CellStatus>()?,
                area: rec.area,
            })
        })
        .collect()
}

/// Polyline per cell over a `width` x `height` canvas. Occluded points are
/// drawn hollow.
pub fn trajectories_svg(rows: &[TrajectoryRow], width: usize, height: usize) -> String {
    let mut tracks: BTreeMap<u64, Vec<&TrajectoryRow>> = BTreeMap::new();
    for row in rows {
        tracks.entry(row.cell_id).or_default().push(row);
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (id, points) in &tracks {
        let hue = (id.wrapping_mul(137)) % 360;
        let colour = format!("hsl({hue},70%,40%)");
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.1},{:.1}", p.position.x, p.position.y))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        for p in points.iter().filter(|p| p.status == CellStatus::Occluded) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="none" stroke="{colour}"/>"#,
                p.position.x, p.position.y
            );
        }
        if let Some(last) = points.last() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{colour}">{id}</text>"#,
                last.position.x + 4.0,
                last.position.y
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<_> = (0..3)
            .map(|i| GrayFrame::new(5, 4, i, (0..20).map(|v| (v * 13 + i) as u8).collect()).unwrap())
            .collect();
        write_frames(dir.path(), &frames).unwrap();
        assert!(dir.path().join("frame_00002.pgm").exists());
        assert_eq!(read_frames(dir.path()).unwrap(), frames);
    }

    #[test]
    fn pairs_round_trip() {
        for dim in [23, 21] {
            let mut set = TrainingSet::new(dim);
            set.push(&vec![0.125; dim], true).unwrap();
            set.push(&(0..dim).map(|i| i as f64 / 3.0).collect::<Vec<_>>(), false).unwrap();
            let mut buf = Vec::new();
            write_pairs_csv(&mut buf, &set).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with(if dim == 23 { "v1," } else { "v3," }));
            assert_eq!(read_pairs_csv(&buf[..]).unwrap(), set);
        }
    }

    #[test]
    fn pairs_reject_bad_input() {
        assert!(read_pairs_csv("a,b\n1,0\n".as_bytes()).is_err());
        assert!(read_pairs_csv("v23,y\n1,2\n".as_bytes()).is_err());
        assert!(read_pairs_csv("v23,y\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn truth_round_trip() {
        let cell = |id, x| TruthCell {
            id,
            centroid: Point::new(x, 2.5),
            visible: id != 3,
            pixels: Vec::new(),
        };
        let truth = GroundTruth {
            width: 10,
            height: 10,
            frames: vec![vec![cell(1, 1.0), cell(2, 1.5)], vec![cell(3, 0.25)], vec![]],
            overlaps: vec![vec![(1, 2)], vec![], vec![]],
        };
        let mut buf = Vec::new();
        write_truth_csv(&mut buf, &truth).unwrap();
        assert_eq!(read_truth_csv(&buf[..], 10, 10, Some(3)).unwrap(), truth);
        assert_eq!(read_truth_csv(&buf[..], 10, 10, None).unwrap().frames.len(), 2);
        assert!(read_truth_csv(&buf[..], 10, 10, Some(1)).is_err());
    }

    #[test]
    fn trajectories_round_trip_and_plot() {
        let rows = vec![
            TrajectoryRow {
                frame: 0,
                cell_id: 1,
                position: Point::new(3.5, 4.0),
                status: CellStatus::New,
                area: 120,
            },
            TrajectoryRow {
                frame: 1,
                cell_id: 1,
                position: Point::new(5.0, 4.25),
                status: CellStatus::Occluded,
                area: 120,
            },
        ];
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame_index,cell_id,x,y,status,area\n"));
        assert_eq!(read_trajectories_csv(&buf[..]).unwrap(), rows);
        let svg = trajectories_svg(&rows, 64, 48);
        assert!(svg.contains("<polyline") && svg.contains("<circle"));
    }
}
