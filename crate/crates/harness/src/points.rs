//! The point-file format.
//!
//! ```text
//! dpkm v1 d=<d> lambda=<lambda> [weighted]
//! x1,x2,...,xd[,weight]
//! ```
//!
//! Coordinates are written with the shortest representation that parses back
//! to the same `f64`, so a write followed by a read is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dpkm::{Dataset, Point, WeightedDataset};

use crate::error::{io_error, HarnessError, Result};

/// Relative slack on the norm bound, matching [`Dataset::new`].
const NORM_TOLERANCE: f64 = 1e-9;

/// What to do with a point outside `B(0, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormPolicy {
    #[default]
    Reject,
    /// Project the point onto the ball. Each point is handled on its own, so
    /// this step does not depend on the rest of the data.
    Project,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointFile {
    Plain(Dataset),
    Weighted(WeightedDataset),
}

impl PointFile {
    pub fn dim(&self) -> usize {
        match self {
            PointFile::Plain(s) => s.dim(),
            PointFile::Weighted(w) => w.dim(),
        }
    }

    pub fn into_plain(self) -> Result<Dataset> {
        match self {
            PointFile::Plain(s) => Ok(s),
            PointFile::Weighted(_) => Err(HarnessError::Config("expected an unweighted point file".into())),
        }
    }

    pub fn into_weighted(self) -> WeightedDataset {
        match self {
            PointFile::Plain(s) => WeightedDataset::unit(&s),
            PointFile::Weighted(w) => w,
        }
    }
}

pub fn format_points(s: &Dataset) -> String {
    render(s.dim(), s.lambda(), s.points(), None)
}

pub fn format_weighted(w: &WeightedDataset) -> String {
    render(w.dim(), w.lambda(), w.points(), Some(w.weights()))
}

fn render(d: usize, lambda: f64, points: &[Point], weights: Option<&[f64]>) -> String {
    let mut out = format!("dpkm v1 d={d} lambda={lambda}{}\n", if weights.is_some() { " weighted" } else { "" });
    for (i, p) in points.iter().enumerate() {
        let mut first = true;
        for c in p.coords().iter().chain(weights.map(|w| &w[i])) {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{c:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_points(path: &Path, s: &Dataset) -> Result<()> {
    fs::write(path, format_points(s)).map_err(io_error(path))
}

pub fn write_weighted(path: &Path, w: &WeightedDataset) -> Result<()> {
    fs::write(path, format_weighted(w)).map_err(io_error(path))
}

/// Reads a point file, checking the dimension against `expected_dim` when given.
pub fn ingest(path: &Path, expected_dim: Option<usize>, policy: NormPolicy) -> Result<PointFile> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    parse_points(&text, expected_dim, policy)
}

pub fn parse_points(text: &str, expected_dim: Option<usize>, policy: NormPolicy) -> Result<PointFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(HarnessError::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    let (d, lambda, weighted) = parse_header(header)?;
    if let Some(expected) = expected_dim {
        if expected != d {
            return Err(HarnessError::Dimension { expected, actual: d });
        }
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (line, raw) in lines {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let values = raw
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| HarnessError::Parse {
                    line,
                    reason: format!("bad number {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let want = d + usize::from(weighted);
        if values.len() != want {
            return Err(HarnessError::Parse {
                line,
                reason: format!("expected {want} fields, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Parse {
                line,
                reason: "non-finite value".into(),
            });
        }
        let mut coords = values;
        if weighted {
            weights.push(coords.pop().expect("weight column"));
        }
        let p = Point::new(coords)?;
        let norm = p.norm();
        if norm > lambda * (1.0 + NORM_TOLERANCE) {
            match policy {
                NormPolicy::Reject => return Err(HarnessError::Norm { line, norm, lambda }),
                NormPolicy::Project => points.push(p.project_to_ball(lambda)),
            }
        } else {
            points.push(p);
        }
    }
    if weighted {
        Ok(PointFile::Weighted(WeightedDataset::new(points, weights, lambda)?))
    } else {
        Ok(PointFile::Plain(Dataset::new(points, lambda)?))
    }
}

fn parse_header(header: &str) -> Result<(usize, f64, bool)> {
    let bad = |reason: String| HarnessError::Parse { line: 1, reason };
    let mut fields = header.split_whitespace();
    if fields.next() != Some("dpkm") || fields.next() != Some("v1") {
        return Err(bad(format!("expected header `dpkm v1 d=<d> lambda=<lambda>`, found {header:?}")));
    }
    let (mut d, mut lambda, mut weighted) = (None, None, false);
    for f in fields {
        if let Some(v) = f.strip_prefix("d=") {
            d = Some(v.parse::<usize>().map_err(|e| bad(format!("bad d: {e}")))?);
        } else if let Some(v) = f.strip_prefix("lambda=") {
            lambda = Some(v.parse::<f64>().map_err(|e| bad(format!("bad lambda: {e}")))?);
        } else if f == "weighted" {
            weighted = true;
        } else {
            return Err(bad(format!("unknown header field {f:?}")));
        }
    }
    let d = d.ok_or_else(|| bad("header lacks d=".into()))?;
    let lambda = lambda.ok_or_else(|| bad("header lacks lambda=".into()))?;
    if d == 0 || !(lambda > 0.0 && lambda.is_finite()) {
        return Err(bad("d must be positive and lambda positive and finite".into()));
    }
    Ok((d, lambda, weighted))
}
