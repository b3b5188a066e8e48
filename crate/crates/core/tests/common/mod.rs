#![allow(dead_code)]

use dpkm::rng::seeded;
use dpkm::{Dataset, Point};
use rand::Rng;

/// Plain-loop k-means cost, independent of the library's distance table.
pub fn brute_cost(points: &[Point], weights: &[f64], centers: &[Point]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            let best = centers
                .iter()
                .map(|c| p.coords().iter().zip(c.coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            w * best
        })
        .sum()
}

/// Best k-subset of `candidates` by recursion over inclusion/exclusion.
pub fn brute_opt(points: &[Point], weights: &[f64], candidates: &[Point], k: usize) -> f64 {
    fn go(
        points: &[Point],
        weights: &[f64],
        candidates: &[Point],
        k: usize,
        start: usize,
        chosen: &mut Vec<Point>,
        best: &mut f64,
    ) {
        if chosen.len() == k {
            *best = best.min(brute_cost(points, weights, chosen));
            return;
        }
        for i in start..candidates.len() {
            chosen.push(candidates[i].clone());
            go(points, weights, candidates, k, i + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(points, weights, candidates, k, 0, &mut Vec::new(), &mut best);
    best
}

pub fn random_point<R: Rng>(d: usize, radius: f64, rng: &mut R) -> Point {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            return Point::new(v).unwrap();
        }
    }
}

pub fn random_points<R: Rng>(m: usize, d: usize, radius: f64, rng: &mut R) -> Vec<Point> {
    (0..m).map(|_| random_point(d, radius, rng)).collect()
}

/// Points clustered around a few random sites, so that instances range from
/// easy to adversarial depending on the spread.
pub fn clustered<R: Rng>(n: usize, d: usize, sites: usize, spread: f64, rng: &mut R) -> Dataset {
    let centers = random_points(sites, d, 0.7, rng);
    let pts = (0..n)
        .map(|i| {
            let c = &centers[i % sites];
            let v: Vec<f64> = c.coords().iter().map(|x| x + rng.random_range(-spread..spread)).collect();
            Point::new(v).unwrap().project_to_ball(1.0)
        })
        .collect();
    Dataset::new(pts, 1.0).unwrap()
}

pub fn diameter(points: &[Point]) -> f64 {
    let mut d2: f64 = 0.0;
    for a in points {
        for b in points {
            d2 = d2.max(a.sq_dist(b));
        }
    }
    d2.sqrt()
}

pub fn rng(seed: u64) -> dpkm::rng::DpRng {
    seeded(seed)
}
