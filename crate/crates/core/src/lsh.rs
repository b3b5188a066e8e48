//! Locality-sensitive hashing for Euclidean distance.
//!
//! A base hash projects onto a Gaussian direction and rounds with a random
//! offset: `floor((g . x + u) / w)`. Concatenating `t` base hashes sharpens the
//! gap between near and far pairs; a pairwise-independent hash then maps the
//! concatenated key into a universe of size `n^3`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;

/// Mersenne prime `2^61 - 1` used by the universe reduction.
pub const MERSENNE_61: u64 = (1 << 61) - 1;
/// Base hash width as a multiple of the near radius.
pub const WIDTH_FACTOR: f64 = 4.0;
/// Normal quantile for the 95% Wilson interval.
const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Collision probability of one base hash of width `w` for two points at distance `s`.
pub fn base_collision_probability(s: f64, w: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    let t = w / s;
    let tail = 0.5 * erfc(t / std::f64::consts::SQRT_2);
    let p = 1.0 - 2.0 * tail - 2.0 / ((2.0 * std::f64::consts::PI).sqrt() * t) * (1.0 - (-t * t / 2.0).exp());
    p.clamp(0.0, 1.0)
}

/// Derived parameters of the concatenated family.
#[derive(Debug, Clone, PartialEq)]
pub struct LshParams {
    pub r: f64,
    pub n: usize,
    /// Requested far-side exponent: far pairs collide with probability at most `n^-(2+a)`.
    pub a: f64,
    /// Requested near-side exponent: near pairs collide with probability at least `n^-b`.
    pub b: f64,
    /// Near-side exponent actually achieved, never above `b`.
    pub b_effective: f64,
    /// Far-distance multiple actually achieved.
    pub c: f64,
    pub width: f64,
    pub concat: usize,
    pub p_base: f64,
    pub q_base: f64,
    pub universe: u64,
}

impl LshParams {
    pub fn new(r: f64, a: f64, b: f64, n: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid("r", format!("must be finite and positive, got {r}")));
        }
        if !(0.0 < b && b < a && a < 1.0) {
            return Err(invalid("a, b", format!("need 0 < b < a < 1, got a = {a}, b = {b}")));
        }
        if n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {n}")));
        }
        let width = WIDTH_FACTOR * r;
        let ln_n = (n as f64).ln();
        let p_base = base_collision_probability(r, width);
        let per_hash = (1.0 / p_base).ln();
        let max_concat = (b * ln_n / per_hash + 1e-12).floor();
        if max_concat < 1.0 {
            return Err(Error::InfeasibleLsh {
                reason: format!(
                    "a single base hash already has near collision probability {p_base:.4} < n^-b = {:.4}; \
                     feasible region is b >= {:.4} for n = {n}",
                    (n as f64).powf(-b),
                    per_hash / ln_n
                ),
            });
        }
        let target = (-(2.0 + a) * ln_n / max_concat).exp();
        let c = smallest_far_multiple(width / r, target);
        let q_base = base_collision_probability(c * r, width);
        let concat = (((2.0 + a) * ln_n) / (1.0 / q_base).ln() - 1e-12).ceil().max(1.0) as usize;
        let cube = (n as u128).pow(3);
        let universe = cube.min(MERSENNE_61 as u128) as u64;
        Ok(LshParams {
            r,
            n,
            a,
            b,
            b_effective: concat as f64 * per_hash / ln_n,
            c,
            width,
            concat,
            p_base,
            q_base,
            universe,
        })
    }

    /// Near-pair collision probability of the concatenated hash.
    pub fn p_near(&self) -> f64 {
        self.p_base.powi(self.concat as i32)
    }

    /// Far-pair collision bound of the concatenated hash, before universe reduction.
    pub fn q_far(&self) -> f64 {
        self.q_base.powi(self.concat as i32)
    }
}

/// Smallest multiple `c >= 1` of the near radius whose base collision
/// probability is at most `target`, for width `w_over_r` in units of `r`.
fn smallest_far_multiple(w_over_r: f64, target: f64) -> f64 {
    let p = |c: f64| base_collision_probability(c, w_over_r);
    if p(1.0) <= target {
        return 1.0;
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while p(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// One sampled function of the concatenated family.
#[derive(Debug, Clone)]
pub struct LshFunction {
    directions: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    width: f64,
    coefficients: Vec<u64>,
    shift: u64,
    universe: u64,
}

pub fn sample_lsh<R: Rng + ?Sized>(params: &LshParams, dim: usize, rng: &mut R) -> LshFunction {
    let directions = (0..params.concat)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let offsets = (0..params.concat).map(|_| rng.random::<f64>() * params.width).collect();
    let coefficients = (0..params.concat).map(|_| rng.random_range(1..MERSENNE_61)).collect();
    LshFunction {
        directions,
        offsets,
        width: params.width,
        coefficients,
        shift: rng.random_range(0..MERSENNE_61),
        universe: params.universe,
    }
}

impl LshFunction {
    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    pub fn base_hashes(&self, x: &Point) -> Result<Vec<i64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(self.base_hashes_unchecked(x.coords()))
    }

    /// The scaled projections `(g . x + u) / w` whose floors are the base hashes.
    pub fn projections(&self, x: &Point) -> Result<Vec<f64>> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(self
            .directions
            .iter()
            .zip(&self.offsets)
            .map(|(g, u)| (g.iter().zip(x.coords()).map(|(a, b)| a * b).sum::<f64>() + u) / self.width)
            .collect())
    }

    /// The function `x -> self(x - shift)`, obtained by moving every offset by `-g . shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<LshFunction> {
        if shift.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: shift.len(),
            });
        }
        let mut f = self.clone();
        for (u, g) in f.offsets.iter_mut().zip(&self.directions) {
            *u -= g.iter().zip(shift).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(f)
    }

    fn base_hashes_unchecked(&self, x: &[f64]) -> Vec<i64> {
        self.directions
            .iter()
            .zip(&self.offsets)
            .map(|(g, u)| {
                let proj: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
                ((proj + u) / self.width).floor() as i64
            })
            .collect()
    }

    /// Bucket id in `[0, universe)`.
    pub fn bucket(&self, x: &Point) -> Result<u64> {
        let keys = self.base_hashes(x)?;
        Ok(self.reduce(&keys))
    }

    pub(crate) fn bucket_unchecked(&self, x: &[f64]) -> u64 {
        self.reduce(&self.base_hashes_unchecked(x))
    }

    fn reduce(&self, keys: &[i64]) -> u64 {
        let p = MERSENNE_61 as u128;
        let mut acc = self.shift as u128;
        for (k, a) in keys.iter().zip(&self.coefficients) {
            let v = (*k as i128).rem_euclid(p as i128) as u128;
            acc = (acc + (*a as u128) * v) % p;
        }
        (acc as u64) % self.universe
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CollisionEstimate {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Monte-Carlo collision frequency of a fresh function per trial for a pair at `distance`.
pub fn collision_probability_estimate<R: Rng + ?Sized>(
    params: &LshParams,
    dim: usize,
    distance: f64,
    trials: u64,
    rng: &mut R,
) -> Result<CollisionEstimate> {
    if trials < 1000 {
        return Err(invalid("trials", format!("need at least 1000, got {trials}")));
    }
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(invalid("distance", format!("must be finite and non-negative, got {distance}")));
    }
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    let mut hits = 0u64;
    for _ in 0..trials {
        let f = sample_lsh(params, dim, rng);
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v *= distance / norm);
        let x = vec![0.0; dim];
        if f.bucket_unchecked(&x) == f.bucket_unchecked(&dir) {
            hits += 1;
        }
    }
    let (lower, upper) = if distance == 0.0 { (1.0, 1.0) } else { wilson_interval(hits, trials) };
    Ok(CollisionEstimate {
        hits,
        trials,
        estimate: hits as f64 / trials as f64,
        lower,
        upper,
    })
}
