//! Planted mixtures of Gaussian clouds.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use dpkm::{Dataset, Point};

use crate::error::{HarnessError, Result};

const CENTER_ATTEMPTS: usize = 10_000;
const RESTARTS: usize = 100;

/// A generated dataset with the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub dataset: Dataset,
    pub labels: Vec<usize>,
    pub centers: Vec<Point>,
}

/// `n` points in `k` Gaussian clouds of standard deviation `sigma * lambda`
/// around centers drawn uniformly from a ball and kept at pairwise distance at
/// least `separation * lambda`. Point `i` belongs to cloud `i mod k`; points
/// falling outside `B(0, lambda)` are projected back onto it.
pub fn generate_mixture<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    n: usize,
    separation: f64,
    sigma: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<Mixture> {
    if k == 0 || d == 0 || n < k {
        return Err(HarnessError::Config(format!("need k >= 1, d >= 1 and n >= k (k={k}, d={d}, n={n})")));
    }
    if !(lambda > 0.0) || !(sigma >= 0.0) || !(separation >= 0.0) {
        return Err(HarnessError::Config("lambda must be positive, sigma and separation nonnegative".into()));
    }
    let radius = lambda * (1.0 - (2.0 * sigma).min(0.5));
    let gap = separation * lambda;
    // Disjoint balls of radius gap/2 around the centers fit in the enlarged ball.
    if k > 1 && (k as f64).ln() + d as f64 * (gap / 2.0).ln() > d as f64 * (radius + gap / 2.0).ln() {
        return Err(HarnessError::Config(format!(
            "{k} centers at separation {separation} cannot fit in {d} dimensions"
        )));
    }
    let centers = place_centers(k, d, radius, gap, rng).ok_or_else(|| {
        HarnessError::Config(format!("could not place {k} centers at separation {separation} in {d} dimensions"))
    })?;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        let coords: Vec<f64> = centers[label]
            .coords()
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + sigma * lambda * z
            })
            .collect();
        points.push(Point::new(coords)?.project_to_ball(lambda));
        labels.push(label);
    }
    Ok(Mixture {
        dataset: Dataset::new(points, lambda)?,
        labels,
        centers,
    })
}

fn place_centers<R: Rng + ?Sized>(k: usize, d: usize, radius: f64, gap: f64, rng: &mut R) -> Option<Vec<Point>> {
    for _ in 0..RESTARTS {
        let mut centers: Vec<Point> = Vec::with_capacity(k);
        for _ in 0..CENTER_ATTEMPTS {
            if centers.len() == k {
                break;
            }
            let c = uniform_in_ball(d, radius, rng);
            if centers.iter().all(|o| o.sq_dist(&c).sqrt() >= gap) {
                centers.push(c);
            }
        }
        if centers.len() == k {
            return Some(centers);
        }
    }
    None
}

fn uniform_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Point {
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    Point::new(dir.into_iter().map(|v| v * r / norm).collect()).expect("finite coordinates")
}

/// Fraction of points whose assigned cluster's majority label is their own.
pub fn purity(labels: &[usize], assignment: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&l, &a) in labels.iter().zip(assignment) {
        *table.entry(a).or_default().entry(l).or_default() += 1;
    }
    let agree: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    agree as f64 / labels.len().max(1) as f64
}
