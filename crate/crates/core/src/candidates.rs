//! Private candidate centers.
//!
//! [`lsh_procedure`] hashes random partitions of the data, keeps buckets whose
//! noisy size clears a threshold and privately averages each kept bucket.
//! [`private_centers`] repeats it over a doubling radius schedule and
//! [`private_k_means_candidates`] peels covered points between rounds so that
//! smaller clusters surface later.

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::error::{check_beta, invalid, Error, Result};
use crate::geometry::{min_sq_dist, CenterSet, Dataset, Point};
use crate::lsh::{sample_lsh, LshParams};
use crate::mechanisms::{laplace, noisy_average_with_size, AverageNoise};
use crate::rng::child;

/// L1 sensitivity of a bucket histogram when one point is replaced: it leaves
/// one bucket and joins another.
pub const HISTOGRAM_L1_SENSITIVITY: f64 = 2.0;
pub const DEFAULT_THRESHOLD_CONSTANT: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateProvenance {
    pub iteration: usize,
    pub radius: f64,
    pub partition: usize,
    pub bucket: u64,
    pub noisy_count: f64,
    pub low_confidence: bool,
}

/// Candidate centers with where each one came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    centers: Vec<Point>,
    provenance: Vec<CandidateProvenance>,
}

impl CandidateSet {
    pub fn new(centers: Vec<Point>, provenance: Vec<CandidateProvenance>) -> Result<Self> {
        if centers.len() != provenance.len() {
            return Err(invalid("provenance", "one entry per center is required"));
        }
        Ok(CandidateSet { centers, provenance })
    }

    /// Candidates with no recorded origin, e.g. supplied by a caller.
    pub fn from_points(centers: Vec<Point>) -> Self {
        let provenance = centers
            .iter()
            .map(|_| CandidateProvenance {
                iteration: 0,
                radius: 0.0,
                partition: 0,
                bucket: 0,
                noisy_count: 0.0,
                low_confidence: false,
            })
            .collect();
        CandidateSet { centers, provenance }
    }

    pub fn points(&self) -> &[Point] {
        &self.centers
    }

    pub fn provenance(&self) -> &[CandidateProvenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn extend(&mut self, other: CandidateSet) {
        self.centers.extend(other.centers);
        self.provenance.extend(other.provenance);
    }

    /// Keeps the `cap` candidates with the largest noisy counts, in their original order.
    pub fn truncate_to(&mut self, cap: usize) {
        if self.len() <= cap {
            return;
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            self.provenance[j]
                .noisy_count
                .total_cmp(&self.provenance[i].noisy_count)
                .then(i.cmp(&j))
        });
        let mut keep = order[..cap].to_vec();
        keep.sort_unstable();
        self.centers = keep.iter().map(|&i| self.centers[i].clone()).collect();
        self.provenance = keep.iter().map(|&i| self.provenance[i].clone()).collect();
    }

    fn tag_iteration(&mut self, iteration: usize) {
        self.provenance.iter_mut().for_each(|p| p.iteration = iteration);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshProcedureConfig {
    pub a: f64,
    pub b: f64,
    pub threshold_constant: f64,
    pub noise: AverageNoise,
}

impl Default for LshProcedureConfig {
    fn default() -> Self {
        LshProcedureConfig {
            a: 0.2,
            b: 0.1,
            threshold_constant: DEFAULT_THRESHOLD_CONSTANT,
            noise: AverageNoise::Laplace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshProcedureReport {
    pub radius: f64,
    pub partitions: usize,
    pub params: LshParams,
    pub threshold: f64,
    pub kept: usize,
    pub cap: usize,
}

/// `ceil(2 n^a ln(1/beta))`.
pub fn partition_count(n: usize, a: f64, beta: f64) -> usize {
    (2.0 * (n as f64).powf(a) * (1.0 / beta).ln()).ceil().max(1.0) as usize
}

/// Noisy bucket sizes at or above `(constant / epsilon) ln(n / beta)` are kept.
pub fn heavy_threshold(n: usize, beta: f64, epsilon: f64, constant: f64) -> f64 {
    constant / epsilon * (n as f64 / beta).ln()
}

/// Smallest threshold at which releasing only occupied buckets is
/// `(epsilon, delta)`-private: a bucket holding the one changed point clears
/// it with probability at most `delta`.
pub fn stability_threshold(epsilon: f64, delta: f64) -> f64 {
    1.0 + HISTOGRAM_L1_SENSITIVITY / epsilon * (1.0 / (2.0 * delta)).ln()
}

fn log2_at_least_one(x: f64) -> f64 {
    x.log2().max(1.0)
}

/// Candidates from heavy LSH buckets at radius `r`.
pub fn lsh_procedure<R: Rng + ?Sized>(
    s: &Dataset,
    r: f64,
    beta: f64,
    budget: PrivacyBudget,
    config: &LshProcedureConfig,
    rng: &mut R,
) -> Result<(CandidateSet, BudgetLedger, LshProcedureReport)> {
    check_beta(beta)?;
    let n = s.len();
    let params = LshParams::new(r, config.a, config.b, n.max(2))?;
    let eps = budget.epsilon();
    if budget.delta() <= 0.0 {
        return Err(invalid("delta", "the occupied-bucket histogram needs delta > 0"));
    }
    let half = PrivacyBudget::new(eps / 2.0, budget.delta() / 2.0)?;
    let avg_budget = PrivacyBudget::new(eps / 2.0, budget.delta() / 2.0)?;
    let partitions = partition_count(n, config.a, beta);
    let threshold = heavy_threshold(n, beta, eps, config.threshold_constant)
        .max(stability_threshold(half.epsilon(), half.delta()));
    let count_scale = HISTOGRAM_L1_SENSITIVITY / half.epsilon();
    let cap = (eps * n as f64 / log2_at_least_one(n as f64)).floor() as usize;

    // No bucket spans more than the data ball.
    let diameter = (params.c * r).min(2.0 * s.lambda());

    let base_seed: u64 = rng.random();
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); partitions];
    for i in 0..n {
        parts[rng.random_range(0..partitions)].push(i);
    }

    let mut found = CandidateSet::default();
    let mut histogram_ledgers = Vec::with_capacity(partitions);
    let mut average_ledgers = Vec::new();
    for (m, members) in parts.iter().enumerate() {
        let mut prng = child(base_seed, m as u64);
        let f = sample_lsh(&params, s.dim(), &mut prng);
        let mut buckets: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for &i in members {
            buckets
                .entry(f.bucket_unchecked(s.points()[i].coords()))
                .or_default()
                .push(i);
        }
        histogram_ledgers.push(BudgetLedger::leaf(format!("partition {m} histogram"), half));
        for (bucket, idx) in &buckets {
            let noisy = idx.len() as f64 + laplace(count_scale, &mut prng);
            if noisy < threshold {
                continue;
            }
            let pts: Vec<Point> = idx.iter().map(|&i| s.points()[i].clone()).collect();
            let avg = noisy_average_with_size(&pts, diameter, avg_budget, beta, config.noise, noisy, &mut prng)?;
            average_ledgers.push(avg.ledger);
            found.centers.push(avg.point);
            found.provenance.push(CandidateProvenance {
                iteration: 0,
                radius: r,
                partition: m,
                bucket: *bucket,
                noisy_count: noisy,
                low_confidence: avg.low_confidence,
            });
        }
    }
    let kept = found.len();
    found.truncate_to(cap);
    let ledger = BudgetLedger::sequential(
        format!("lsh procedure r={r:e}"),
        budget,
        vec![
            BudgetLedger::parallel("bucket histograms", half, histogram_ledgers),
            BudgetLedger::parallel("bucket averages", avg_budget, average_ledgers),
        ],
    );
    Ok((
        found,
        ledger,
        LshProcedureReport {
            radius: r,
            partitions,
            params,
            threshold,
            kept,
            cap,
        },
    ))
}

/// Radii `2^i lambda / n` for `i = 0..=floor(log2 n)`.
pub fn radius_schedule(n: usize, lambda: f64) -> Vec<f64> {
    let count = (n.max(1) as f64).log2().floor() as usize + 1;
    (0..count).map(|i| 2f64.powi(i as i32) * lambda / n as f64).collect()
}

/// Data-independent points used to pad a candidate pool smaller than `k`:
/// the origin, then `+-lambda/2` along each axis in turn.
pub fn public_filler(dim: usize, lambda: f64, count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let mut v = vec![0.0; dim];
            if i > 0 {
                let j = (i - 1) / 2 % dim;
                let layer = (i - 1) / (2 * dim) + 1;
                let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
                v[j] = sign * lambda / (2.0 * layer as f64);
            }
            Point::from_vec_unchecked(v)
        })
        .collect()
}

/// Union of [`lsh_procedure`] outputs over the radius schedule.
pub fn private_centers<R: Rng + ?Sized>(
    s: &Dataset,
    beta: f64,
    budget: PrivacyBudget,
    config: &LshProcedureConfig,
    rng: &mut R,
) -> Result<(CandidateSet, BudgetLedger, Vec<LshProcedureReport>)> {
    let radii = radius_schedule(s.len(), s.lambda());
    let each = budget.split(radii.len())?;
    let mut all = CandidateSet::default();
    let mut ledgers = Vec::with_capacity(radii.len());
    let mut reports = Vec::with_capacity(radii.len());
    for r in radii {
        let (c, l, rep) = lsh_procedure(s, r, beta, each, config, rng)?;
        all.extend(c);
        ledgers.push(l);
        reports.push(rep);
    }
    all.truncate_to((budget.epsilon() * s.len() as f64).floor() as usize);
    Ok((all, BudgetLedger::sequential("private centers", budget, ledgers), reports))
}

/// Indices (ascending) of the `m` points of `s` farthest from `centers`;
/// equal distances prefer the lower index.
pub fn peel(s: &Dataset, centers: &CenterSet, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(invalid("m", "must be at least 1"));
    }
    if m > s.len() {
        return Err(Error::TooFewPoints { k: m, available: s.len() });
    }
    if centers.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: centers.dim(),
        });
    }
    let dist: Vec<f64> = s
        .points()
        .iter()
        .map(|p| min_sq_dist(p.coords(), centers.centers()))
        .collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| dist[j].total_cmp(&dist[i]).then(i.cmp(&j)));
    let mut keep = order[..m].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Parameters of the shrinking-size schedule between peeling rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeelSchedule {
    pub gamma: f64,
    pub t: usize,
    pub w: f64,
    pub k: usize,
    pub exponent: f64,
}

/// `max(1, ceil(log2 log2 n))`.
pub fn kmeans_iterations(n: usize) -> usize {
    let ll = (n.max(2) as f64).log2().log2();
    (ll.ceil() as i64).max(1) as usize
}

/// `max(3, ceil(log2 log2 n))`.
pub fn default_schedule_t(n: usize) -> usize {
    kmeans_iterations(n).max(3)
}

/// `(gamma sqrt(d) / eps) loglog n log(k/beta) sqrt(max(1, log(loglog n / delta)))`, base-2 logs.
pub fn schedule_w(gamma: f64, d: usize, epsilon: f64, n: usize, k: usize, beta: f64, delta: f64) -> f64 {
    let ll = (n.max(2) as f64).log2().log2().max(1.0);
    let inner = if delta > 0.0 { (ll / delta).log2().max(1.0) } else { 1.0 };
    gamma * (d as f64).sqrt() / epsilon * ll * (k as f64 / beta).log2() * inner.sqrt()
}

/// `ceil(2 (T + 1) w k n_i^(a+b))`.
pub fn next_size(n_i: usize, t: usize, w: f64, k: usize, exponent: f64) -> usize {
    (2.0 * (t as f64 + 1.0) * w * k as f64 * (n_i as f64).powf(exponent)).ceil() as usize
}

/// `(2 (T + 1) w k)^(1 / (1 - a - b)) lambda^2`: the shape of the additive
/// error left by points that are never covered, with unit constant.
pub fn additive_floor_shape(schedule: &PeelSchedule, lambda: f64) -> f64 {
    let base = 2.0 * (schedule.t as f64 + 1.0) * schedule.w * schedule.k as f64;
    base.powf(1.0 / (1.0 - schedule.exponent)) * lambda * lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CandidateConfig {
    pub lsh: LshProcedureConfig,
    pub gamma: Option<f64>,
    pub t: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub size: usize,
    pub found: usize,
    pub next_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansCandidates {
    pub candidates: CandidateSet,
    pub ledger: BudgetLedger,
    pub trace: Vec<IterationTrace>,
    pub schedule: PeelSchedule,
    pub stopped_early: bool,
}

/// Candidate centers for k-means: rounds of [`private_centers`] with peeling.
pub fn private_k_means_candidates<R: Rng + ?Sized>(
    s: &Dataset,
    k: usize,
    budget: PrivacyBudget,
    beta: f64,
    config: &CandidateConfig,
    rng: &mut R,
) -> Result<KMeansCandidates> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    check_beta(beta)?;
    let n = s.len();
    let iterations = kmeans_iterations(n);
    let each = budget.split(iterations)?;
    let schedule = PeelSchedule {
        gamma: config.gamma.unwrap_or(1.0),
        t: config.t.unwrap_or_else(|| default_schedule_t(n)),
        w: schedule_w(
            config.gamma.unwrap_or(1.0),
            s.dim(),
            budget.epsilon(),
            n,
            k,
            beta,
            budget.delta(),
        ),
        k,
        exponent: config.lsh.a + config.lsh.b,
    };

    let mut current: Dataset = s.clone();
    let mut all = CandidateSet::default();
    let mut ledgers = Vec::with_capacity(iterations);
    let mut trace = Vec::with_capacity(iterations);
    let mut stopped_early = false;
    for it in 0..iterations {
        if stopped_early {
            ledgers.push(BudgetLedger::leaf(format!("iteration {it} (unused)"), each));
            continue;
        }
        let (mut found, ledger, _) = private_centers(&current, beta / k as f64, each, &config.lsh, rng)?;
        found.tag_iteration(it);
        ledgers.push(ledger);
        let mut entry = IterationTrace {
            size: current.len(),
            found: found.len(),
            next_size: None,
        };
        if it + 1 < iterations {
            let next = next_size(current.len(), schedule.t, schedule.w, k, schedule.exponent);
            entry.next_size = Some(next);
            if next >= current.len() {
                warn!(
                    "peeling schedule does not shrink ({} -> {next}); stopping after iteration {it}",
                    current.len()
                );
                stopped_early = true;
            } else if !found.is_empty() {
                let centers = CenterSet::new(found.points().to_vec())?;
                let keep = peel(&current, &centers, next)?;
                current = current.subset(&keep)?;
            }
        }
        trace.push(entry);
        all.extend(found);
    }
    let cap = (budget.epsilon() * n as f64 * (k as f64 / beta).log2()).floor() as usize;
    all.truncate_to(cap);
    Ok(KMeansCandidates {
        candidates: all,
        ledger: BudgetLedger::sequential("k-means candidates", budget, ledgers),
        trace,
        schedule,
        stopped_early,
    })
}
