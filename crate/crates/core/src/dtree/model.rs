//! Plain-text model files.
//!
//! ```text
//! celltrack-dtree 1
//! dim 23 max_depth 8 subdivisions 1000 stop_size 20 stop_entropy 0.0
//! S 1 12.5
//! L 0.03 311
//! L 0.97 402
//! end 3
//! ```
//!
//! Nodes are listed in pre-order. Feature indices are one-based on disk.
//! Floats use Rust's shortest round-trip formatting, so a read after a
//! write reproduces every threshold and probability bit for bit.

use std::fmt::Write as _;

use super::{DecisionTree, Node, TrainConfig};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "celltrack-dtree";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model(tree: &DecisionTree) -> String {
    let mut out = String::new();
    let c = &tree.config;
    let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(
        out,
        "dim {} max_depth {} subdivisions {} stop_size {} stop_entropy {:?}",
        tree.dim, c.max_depth, c.subdivisions, c.stop_size, c.stop_entropy
    );
    let mut stack = vec![&tree.root];
    let mut count = 0usize;
    while let Some(node) = stack.pop() {
        count += 1;
        match node {
            Node::Leaf {
                probability,
                support,
            } => {
                let _ = writeln!(out, "L {probability:?} {support}");
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "S {} {threshold:?}", feature + 1);
                stack.push(right);
                stack.push(left);
            }
        }
    }
    let _ = writeln!(out, "end {count}");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Ok((i + 1, line.split_whitespace().collect()));
        }
        Err(Error::MalformedModel {
            line: 0,
            reason: "unexpected end of file".into(),
        })
    }
}

fn field<T: std::str::FromStr>(line: usize, token: Option<&&str>, what: &str) -> Result<T> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::MalformedModel {
            line,
            reason: format!("bad or missing {what}"),
        })
}

pub fn read_model(text: &str) -> Result<DecisionTree> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };

    let (ln, head) = lines.next()?;
    if head.first() != Some(&MODEL_MAGIC) {
        return Err(Error::MalformedModel {
            line: ln,
            reason: "not a decision tree model".into(),
        });
    }
    let version = head.get(1).copied().unwrap_or("");
    if version.parse::<u32>().ok() != Some(MODEL_VERSION) {
        return Err(Error::ModelVersion(version.to_string()));
    }

    let (ln, cfg) = lines.next()?;
    let mut dim = None;
    let mut config = TrainConfig::default();
    for pair in cfg.chunks(2) {
        let key = pair[0];
        let value = pair.get(1);
        match key {
            "dim" => dim = Some(field(ln, value, "dim")?),
            "max_depth" => config.max_depth = field(ln, value, "max_depth")?,
            "subdivisions" => config.subdivisions = field(ln, value, "subdivisions")?,
            "stop_size" => config.stop_size = field(ln, value, "stop_size")?,
            "stop_entropy" => config.stop_entropy = field(ln, value, "stop_entropy")?,
            other => {
                return Err(Error::MalformedModel {
                    line: ln,
                    reason: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    let dim: usize = dim.ok_or(Error::MalformedModel {
        line: ln,
        reason: "missing dim".into(),
    })?;

    let mut count = 0usize;
    let root = read_node(&mut lines, dim, &mut count, 0)?;

    let (ln, tail) = lines.next()?;
    if tail.first() != Some(&"end") || field::<usize>(ln, tail.get(1), "node count")? != count {
        return Err(Error::MalformedModel {
            line: ln,
            reason: "missing or inconsistent end marker".into(),
        });
    }
    Ok(DecisionTree { dim, config, root })
}

fn read_node(lines: &mut Lines<'_>, dim: usize, count: &mut usize, depth: usize) -> Result<Node> {
    let (ln, tokens) = lines.next()?;
    // Guards the recursion against hostile input.
    if depth > 4096 {
        return Err(Error::MalformedModel {
            line: ln,
            reason: "tree too deep".into(),
        });
    }
    *count += 1;
    match tokens.first().copied() {
        Some("L") if tokens.len() == 3 => {
            let probability: f64 = field(ln, tokens.get(1), "probability")?;
            let support: usize = field(ln, tokens.get(2), "support")?;
            if !(0.0..=1.0).contains(&probability) || support == 0 {
                return Err(Error::MalformedModel {
                    line: ln,
                    reason: "leaf out of range".into(),
                });
            }
            Ok(Node::Leaf {
                probability,
                support,
            })
        }
        Some("S") if tokens.len() == 3 => {
            let k: usize = field(ln, tokens.get(1), "feature index")?;
            let threshold: f64 = field(ln, tokens.get(2), "threshold")?;
            if k == 0 || k > dim || threshold.is_nan() {
                return Err(Error::MalformedModel {
                    line: ln,
                    reason: format!("split feature {k} invalid for dimension {dim}"),
                });
            }
            let left = read_node(lines, dim, count, depth + 1)?;
            let right = read_node(lines, dim, count, depth + 1)?;
            Ok(Node::Split {
                feature: k - 1,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        _ => Err(Error::MalformedModel {
            line: ln,
            reason: "expected `S k tau` or `L p n`".into(),
        }),
    }
}
