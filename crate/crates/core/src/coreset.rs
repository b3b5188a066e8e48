//! Private coresets: a weighted set of at most `k` centers whose clustering
//! cost tracks the data's cost for every set of centers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::kmeanspp_lloyd;
use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::candidates::{CandidateConfig, HISTOGRAM_L1_SENSITIVITY};
use crate::error::{invalid, Error, Result};
use crate::geometry::{cost, nearest_in, opt_over_candidates, weighted_cost, CenterSet, Dataset, Point, WeightedDataset};
use crate::ldp::{ldp_k_means, nearest_center_round, ClientPool, LdpConfig, LdpTranscript};
use crate::mechanisms::laplace;
use crate::pipeline::centralized_k_means;
use crate::rng::child;

/// A weighted point set standing in for the data, with the guarantee its
/// construction claims, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Coreset {
    pub points: WeightedDataset,
    pub claimed: Option<(f64, f64)>,
}

impl Coreset {
    pub fn new(points: WeightedDataset) -> Self {
        Coreset { points, claimed: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpCoresetOutcome {
    pub coreset: Coreset,
    pub transcript: LdpTranscript,
    /// Rounds used by the clustering step alone.
    pub clustering_rounds: usize,
    pub ledger: BudgetLedger,
}

/// Runs local-model k-means at half the budget, then one more frequency
/// round over the chosen centers at the other half to weight them.
pub fn ldp_coreset<R: Rng + ?Sized>(
    clients: &ClientPool,
    k: usize,
    epsilon: f64,
    beta: f64,
    config: &LdpConfig,
    rng: &mut R,
) -> Result<LdpCoresetOutcome> {
    let clustering = ldp_k_means(clients, k, epsilon / 2.0, beta, config, rng)?;
    let mut transcript = clustering.transcript;
    let clustering_rounds = transcript.round_count();
    let centers = clustering.centers.centers().to_vec();
    let weights = nearest_center_round(clients, &mut transcript, &centers, epsilon / 2.0, config.randomness, rng)?;
    let ledger = BudgetLedger::sequential(
        "ldp coreset",
        PrivacyBudget::pure(epsilon)?,
        vec![
            clustering.ledger,
            BudgetLedger::leaf("coreset weights", PrivacyBudget::pure(epsilon / 2.0)?),
        ],
    );
    Ok(LdpCoresetOutcome {
        coreset: Coreset::new(WeightedDataset::new(centers, weights, clients.lambda())?),
        transcript,
        clustering_rounds,
        ledger,
    })
}

/// How the centralized coreset turns cluster sizes into weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightNoise {
    /// Exact sizes. Not private; for tests.
    Exact,
    /// Laplace noise for a histogram under replacement of one point.
    Laplace { epsilon: f64 },
}

/// Sizes of the clusters `centers` induce on `s`, optionally noised.
pub fn cluster_weights<R: Rng + ?Sized>(
    s: &Dataset,
    centers: &[Point],
    noise: WeightNoise,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    let mut counts = vec![0.0; centers.len()];
    for p in s.points() {
        counts[nearest_in(p.coords(), centers).0] += 1.0;
    }
    if let WeightNoise::Laplace { epsilon } = noise {
        crate::error::check_epsilon(epsilon)?;
        let scale = HISTOGRAM_L1_SENSITIVITY / epsilon;
        counts.iter_mut().for_each(|c| *c += laplace(scale, rng));
    }
    Ok(counts)
}

/// `(2 / eps_w) ln(2k / beta)`: all `k` noisy weights are this close to the
/// true sizes with probability at least `1 - beta`.
pub fn weight_accuracy_bound(epsilon_w: f64, k: usize, beta: f64) -> f64 {
    HISTOGRAM_L1_SENSITIVITY / epsilon_w * (2.0 * k as f64 / beta).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedCoresetOutcome {
    pub coreset: Coreset,
    pub ledger: BudgetLedger,
}

/// Centralized k-means at half the budget, then Laplace-noised cluster sizes
/// at the other half of epsilon. With `exact_weights` the sizes are not
/// noised and the weights step is left out of the ledger.
pub fn centralized_coreset<R: Rng + ?Sized>(
    s: &Dataset,
    k: usize,
    budget: PrivacyBudget,
    beta: f64,
    config: &CandidateConfig,
    exact_weights: bool,
    rng: &mut R,
) -> Result<CentralizedCoresetOutcome> {
    let half = budget.scale(0.5);
    let clustering = centralized_k_means(s, k, half, beta, config, rng)?;
    let centers = clustering.centers.centers().to_vec();
    let weight_budget = PrivacyBudget::pure(budget.epsilon() / 2.0)?;
    let noise = if exact_weights {
        WeightNoise::Exact
    } else {
        WeightNoise::Laplace {
            epsilon: weight_budget.epsilon(),
        }
    };
    let weights = cluster_weights(s, &centers, noise, rng)?;
    let mut children = vec![clustering.ledger];
    if !exact_weights {
        children.push(BudgetLedger::leaf("coreset weights", weight_budget));
    }
    Ok(CentralizedCoresetOutcome {
        coreset: Coreset::new(WeightedDataset::new(centers, weights, s.lambda())?),
        ledger: BudgetLedger::sequential("centralized coreset", budget, children),
    })
}

/// Where a sampled center set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Uniform,
    CoresetPoints,
    Baseline,
    SubsampleOptimum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoresetProbe {
    pub kind: ProbeKind,
    pub data_cost: f64,
    pub coreset_cost: f64,
}

/// The smallest `(gamma, eta)` consistent with every probe, as measured.
///
/// `gamma` is the smallest multiplier at which `eta` reaches its minimum over
/// `gamma >= 1`; `eta_at_unit_gamma` is the additive error needed with
/// `gamma = 1`. This is an envelope over sampled center sets, not a proof
/// over all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetEnvelope {
    pub gamma: f64,
    pub eta: f64,
    pub eta_at_unit_gamma: f64,
    pub probes: Vec<CoresetProbe>,
}

impl CoresetEnvelope {
    pub const NOTE: &'static str = "empirical envelope over sampled center sets; not a proof over all center sets";
}

/// Largest additive error needed at multiplier `gamma`, over both directions.
pub fn eta_at(probes: &[CoresetProbe], gamma: f64) -> f64 {
    probes
        .iter()
        .map(|p| (p.coreset_cost - gamma * p.data_cost).max(p.data_cost - gamma * p.coreset_cost))
        .fold(0.0, f64::max)
}

/// Subsample size for the brute-force optimum probe.
const SUBSAMPLE_CANDIDATES: usize = 12;

/// Measures how well `p` approximates the cost of `s` over `trials` uniform
/// center sets of size `k` plus adversarial ones: the coreset's own points,
/// k-means++ centers on `s` and the best centers among a random subsample of
/// `s` (when `k` is small enough to enumerate).
///
/// Probes are drawn from independent generators derived from one seed and
/// merged in order, so the result does not depend on evaluation order.
pub fn coreset_check<R: Rng + ?Sized>(
    s: &Dataset,
    p: &WeightedDataset,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<CoresetEnvelope> {
    if trials < 1 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if p.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: p.dim(),
        });
    }
    let seed: u64 = rng.random();
    let mut sets: Vec<(ProbeKind, CenterSet)> = Vec::with_capacity(trials + 3);
    for t in 0..trials {
        let mut r = child(seed, t as u64);
        let centers = (0..k).map(|_| uniform_in_ball(s.dim(), s.lambda(), &mut r)).collect();
        sets.push((ProbeKind::Uniform, CenterSet::new(centers)?));
    }
    let mut own: Vec<Point> = p.points().iter().take(k).cloned().collect();
    own.extend(uniform_fill(s, k - own.len(), seed));
    sets.push((ProbeKind::CoresetPoints, CenterSet::new(own)?));
    if k <= s.len() {
        sets.push((ProbeKind::Baseline, kmeanspp_lloyd(s, k, &mut child(seed, u64::MAX))?));
    }
    if k <= crate::geometry::MAX_ENUM_K {
        let mut r = child(seed, u64::MAX - 1);
        let pool: Vec<Point> = rand::seq::index::sample(&mut r, s.len(), SUBSAMPLE_CANDIDATES.min(s.len()))
            .into_iter()
            .map(|i| s.points()[i].clone())
            .collect();
        if k <= pool.len() {
            let sub = Dataset::new(pool.clone(), s.lambda())?;
            sets.push((ProbeKind::SubsampleOptimum, opt_over_candidates(&sub, &pool, k)?.0));
        }
    }
    let probes = sets
        .into_iter()
        .map(|(kind, d)| {
            Ok(CoresetProbe {
                kind,
                data_cost: cost(s, &d)?,
                coreset_cost: weighted_cost(p, &d)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (gamma, eta) = fit_envelope(&probes);
    Ok(CoresetEnvelope {
        gamma,
        eta,
        eta_at_unit_gamma: eta_at(&probes, 1.0),
        probes,
    })
}

/// Minimizes the convex piecewise-linear `eta_at(gamma)` over `gamma >= 1` and
/// returns the smallest minimizer with its value.
fn fit_envelope(probes: &[CoresetProbe]) -> (f64, f64) {
    // Each probe contributes lines `b - gamma a` and `a - gamma b`, stored as
    // (intercept, slope). A negative cost gives a line that grows with gamma.
    let lines: Vec<(f64, f64)> = probes
        .iter()
        .flat_map(|p| [(p.coreset_cost, p.data_cost), (p.data_cost, p.coreset_cost)])
        .collect();
    let growing = lines.iter().any(|&(_, slope)| slope < 0.0);
    // Floor reached as gamma grows when no line increases: lines with zero
    // slope stay, all others fall below zero eventually.
    let floor = lines
        .iter()
        .filter(|&&(_, slope)| slope == 0.0)
        .map(|&(c, _)| c)
        .fold(0.0, f64::max);
    let knee = lines
        .iter()
        .filter(|&&(_, slope)| slope > 0.0)
        .map(|&(c, slope)| (c - floor) / slope)
        .fold(1.0, f64::max);
    if !growing {
        return (knee, floor.max(eta_at(probes, knee)));
    }
    // Ternary search on the convex function.
    let (mut lo, mut hi) = (1.0, knee.max(1.0));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eta_at(probes, m1) <= eta_at(probes, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let best = eta_at(probes, lo);
    (lo, best)
}

fn uniform_in_ball<R: Rng + ?Sized>(dim: usize, lambda: f64, rng: &mut R) -> Point {
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let radius = lambda * rng.random::<f64>().powf(1.0 / dim as f64);
    Point::from_vec_unchecked(dir.into_iter().map(|v| v * radius / norm).collect())
}

fn uniform_fill(s: &Dataset, count: usize, seed: u64) -> Vec<Point> {
    let mut r = child(seed, u64::MAX - 2);
    (0..count).map(|_| uniform_in_ball(s.dim(), s.lambda(), &mut r)).collect()
}
