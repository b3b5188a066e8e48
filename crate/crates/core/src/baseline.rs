//! Non-private k-means++ seeding followed by Lloyd iterations.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cost, min_sq_dist, nearest_in, CenterSet, Dataset, Point};

pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const LLOYD_RELATIVE_TOLERANCE: f64 = 1e-9;

pub fn kmeanspp_lloyd<R: Rng + ?Sized>(s: &Dataset, k: usize, rng: &mut R) -> Result<CenterSet> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k > s.len() {
        return Err(Error::TooFewPoints { k, available: s.len() });
    }
    let mut centers = seed(s, k, rng);
    let mut current = cost(s, &CenterSet::new(centers.clone())?)?;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let d = s.dim();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for p in s.points() {
            let (j, _) = nearest_in(p.coords(), &centers);
            counts[j] += 1;
            for (acc, v) in sums[j].iter_mut().zip(p.coords()) {
                *acc += v;
            }
        }
        let next: Vec<Point> = (0..k)
            .map(|j| {
                if counts[j] == 0 {
                    centers[j].clone()
                } else {
                    Point::from_vec_unchecked(sums[j].iter().map(|v| v / counts[j] as f64).collect())
                }
            })
            .collect();
        let next_cost = cost(s, &CenterSet::new(next.clone())?)?;
        centers = next;
        let improvement = current - next_cost;
        current = next_cost;
        if improvement <= LLOYD_RELATIVE_TOLERANCE * current.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    CenterSet::new(centers)
}

/// D^2 seeding.
fn seed<R: Rng + ?Sized>(s: &Dataset, k: usize, rng: &mut R) -> Vec<Point> {
    let pts = s.points();
    let mut centers = vec![pts[rng.random_range(0..pts.len())].clone()];
    let mut dist: Vec<f64> = pts.iter().map(|p| p.sq_dist(&centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..pts.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = pts.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centers.push(pts[pick].clone());
        for (i, p) in pts.iter().enumerate() {
            dist[i] = min_sq_dist(p.coords(), &centers[centers.len() - 1..]).min(dist[i]);
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rejects_k_larger_than_n() {
        let s = Dataset::from_rows(vec![vec![0.0], vec![1.0]], 1.0).unwrap();
        let mut rng = seeded(1);
        assert!(matches!(kmeanspp_lloyd(&s, 3, &mut rng), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn recovers_separated_clusters() {
        let mut rows = Vec::new();
        for c in [-0.8, 0.0, 0.8] {
            for i in 0..30 {
                rows.push(vec![c + (i as f64 - 15.0) * 1e-3, 0.1]);
            }
        }
        let s = Dataset::from_rows(rows, 1.0).unwrap();
        let mut best = f64::INFINITY;
        for seed_value in 0..5 {
            let c = kmeanspp_lloyd(&s, 3, &mut seeded(seed_value)).unwrap();
            best = best.min(cost(&s, &c).unwrap());
        }
        let within: f64 = 3.0 * (0..30).map(|i| ((i as f64 - 14.5) * 1e-3).powi(2)).sum::<f64>();
        assert!(best <= within * (1.0 + 1e-9));
    }
}
