//! Points, datasets, center sets and the k-means objective.

use crate::error::{invalid, Error, Result};

/// Relative slack allowed when checking a norm against the ball radius.
const BALL_SLACK: f64 = 1e-9;

/// Largest candidate pool accepted by the exhaustive optimum search.
pub const MAX_ENUM_CANDIDATES: usize = 20;
/// Largest k accepted by the exhaustive optimum search.
pub const MAX_ENUM_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("point", "must have at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Point(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim.max(1)])
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn sq_dist(&self, other: &Point) -> f64 {
        sq_dist(&self.0, &other.0)
    }

    /// Radial projection onto the closed ball of radius `lambda`.
    pub fn project_to_ball(&self, lambda: f64) -> Point {
        let norm = self.norm();
        if norm <= lambda {
            self.clone()
        } else {
            Point(self.0.iter().map(|c| c * lambda / norm).collect())
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A non-empty multiset of points inside the ball `B(0, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
    dim: usize,
    lambda: f64,
}

impl Dataset {
    pub fn new(points: Vec<Point>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid("lambda", format!("must be finite and positive, got {lambda}")));
        }
        let dim = points.first().ok_or(Error::EmptyDataset)?.dim();
        for (index, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
            let norm = p.norm();
            if norm > lambda * (1.0 + BALL_SLACK) {
                return Err(Error::OutsideBall { index, norm, lambda });
            }
        }
        Ok(Dataset { points, dim, lambda })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(index, r)| Point::new(r).map_err(|_| Error::NonFinite { index }))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(points, lambda)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Sub-multiset by index; indices must be in range and non-empty.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let points = indices
            .iter()
            .map(|&i| {
                self.points
                    .get(i)
                    .cloned()
                    .ok_or_else(|| invalid("indices", format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            points,
            dim: self.dim,
            lambda: self.lambda,
        })
    }
}

/// Points with real (possibly negative) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    points: Vec<Point>,
    weights: Vec<f64>,
    dim: usize,
    lambda: f64,
}

impl WeightedDataset {
    pub fn new(points: Vec<Point>, weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(
                "weights",
                format!("{} weights for {} points", weights.len(), points.len()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("weights", "must be finite"));
        }
        let dim = points.first().ok_or(Error::EmptyDataset)?.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        Ok(WeightedDataset {
            points,
            weights,
            dim,
            lambda,
        })
    }

    /// Every point of `s` with weight one.
    pub fn unit(s: &Dataset) -> Self {
        WeightedDataset {
            points: s.points.clone(),
            weights: vec![1.0; s.len()],
            dim: s.dim,
            lambda: s.lambda,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> WeightedDataset {
        WeightedDataset {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }
}

/// A non-empty set of centers sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    centers: Vec<Point>,
}

impl CenterSet {
    pub fn new(centers: Vec<Point>) -> Result<Self> {
        let dim = centers.first().ok_or(Error::EmptyCenters)?.dim();
        if let Some(c) = centers.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        Ok(CenterSet { centers })
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }
}

/// Nearest center to `x`; ties go to the lowest index.
pub fn nearest<'a>(x: &Point, centers: &'a CenterSet) -> Result<(usize, &'a Point)> {
    if x.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            expected: centers.dim(),
            got: x.dim(),
        });
    }
    Ok(nearest_in(x.coords(), centers.centers()))
}

pub(crate) fn nearest_in<'a>(x: &[f64], centers: &'a [Point]) -> (usize, &'a Point) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c.coords());
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, &centers[best])
}

pub(crate) fn min_sq_dist(x: &[f64], centers: &[Point]) -> f64 {
    centers
        .iter()
        .map(|c| sq_dist(x, c.coords()))
        .fold(f64::INFINITY, f64::min)
}

/// `sum_x min_c ||x - c||^2`.
pub fn cost(s: &Dataset, centers: &CenterSet) -> Result<f64> {
    if s.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: centers.dim(),
        });
    }
    Ok(s.points()
        .iter()
        .map(|x| min_sq_dist(x.coords(), centers.centers()))
        .sum())
}

/// `sum_i w_i min_c ||x_i - c||^2`, weights may be negative.
pub fn weighted_cost(b: &WeightedDataset, centers: &CenterSet) -> Result<f64> {
    if b.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            got: centers.dim(),
        });
    }
    Ok(b.points()
        .iter()
        .zip(b.weights())
        .map(|(x, w)| w * min_sq_dist(x.coords(), centers.centers()))
        .sum())
}

/// Exhaustive minimum of `cost(s, D)` over all k-subsets `D` of `candidates`.
///
/// Ties keep the lexicographically first subset. Refuses pools larger than
/// [`MAX_ENUM_CANDIDATES`] or `k > MAX_ENUM_K`.
pub fn opt_over_candidates(s: &Dataset, candidates: &[Point], k: usize) -> Result<(CenterSet, f64)> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if candidates.len() > MAX_ENUM_CANDIDATES || k > MAX_ENUM_K {
        return Err(Error::EnumerationTooLarge {
            reason: format!(
                "|Y| = {} (max {MAX_ENUM_CANDIDATES}), k = {k} (max {MAX_ENUM_K})",
                candidates.len()
            ),
        });
    }
    if k > candidates.len() {
        return Err(Error::TooFewPoints {
            k,
            available: candidates.len(),
        });
    }
    if let Some(c) = candidates.iter().find(|c| c.dim() != s.dim()) {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: c.dim(),
        });
    }
    let table = DistanceTable::new(s.points(), candidates);
    let weights = vec![1.0; s.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_subset(candidates.len(), k, &mut |subset| {
        let c = table.subset_cost(&weights, subset);
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((subset.to_vec(), c));
        }
    });
    let (subset, c) = best.expect("at least one subset");
    let centers = CenterSet::new(subset.iter().map(|&i| candidates[i].clone()).collect())?;
    Ok((centers, c))
}

/// Calls `f` on every increasing k-subset of `0..m` in lexicographic order.
pub fn for_each_subset(m: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Squared distances from every point to every candidate, row-major by point.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistanceTable {
    pub fn new(points: &[Point], candidates: &[Point]) -> Self {
        let cols = candidates.len();
        let mut data = Vec::with_capacity(points.len() * cols);
        for p in points {
            for c in candidates {
                data.push(p.sq_dist(c));
            }
        }
        DistanceTable {
            rows: points.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn subset_cost(&self, weights: &[f64], subset: &[usize]) -> f64 {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let m = subset.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
                weights[r] * m
            })
            .sum()
    }
}
