//! Simulated client/server protocols in the local model.

use rand::Rng;

use super::grouphist::{
    check_protocol_params, client_rng, debias_factor, grouphist_aggregate, grouphist_randomize, PublicRandomness,
    RandomnessMode,
};
use super::transcript::{Broadcast, LdpReport, LdpRound, LdpTranscript, Payload};
use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::candidates::{public_filler, radius_schedule, CandidateProvenance, CandidateSet};
use crate::error::{invalid, Error, Result};
use crate::geometry::{nearest_in, CenterSet, Dataset, Point, WeightedDataset};
use crate::lsh::{sample_lsh, LshFunction, LshParams, MERSENNE_61};
use crate::mechanisms::laplace;
use crate::rng::{derive_seed, DpRng};
use crate::selection::{noisy_local_search, TableCost};

/// The users of a simulated protocol. Each holds one point that only its own
/// randomizer ever reads.
#[derive(Debug, Clone)]
pub struct ClientPool {
    points: Vec<Point>,
    dim: usize,
    lambda: f64,
    seed: u64,
}

impl ClientPool {
    /// One client per point of `s`; client randomness derives from `seed`.
    pub fn new(s: &Dataset, seed: u64) -> Self {
        ClientPool {
            points: s.points().to_vec(),
            dim: s.dim(),
            lambda: s.lambda(),
            seed,
        }
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

    /// Runs every client's randomizer for `round`, in user order.
    pub(crate) fn respond<F>(&self, round: u32, epsilon: f64, randomizer: F) -> Result<Vec<LdpReport>>
    where
        F: Fn(usize, &Point, &mut DpRng) -> Result<Payload>,
    {
        self.points
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = client_rng(self.seed, round, i);
                Ok(LdpReport {
                    user: i,
                    round,
                    epsilon,
                    payload: randomizer(i, x, &mut rng)?,
                })
            })
            .collect()
    }

    /// Exact number of clients whose nearest point of `candidates` is each
    /// candidate. A test-side view: no protocol step calls it.
    pub fn true_candidate_weights(&self, candidates: &[Point]) -> Vec<f64> {
        let mut w = vec![0.0; candidates.len()];
        for p in &self.points {
            w[nearest_in(p.coords(), candidates).0] += 1.0;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpConfig {
    pub a: f64,
    pub b: f64,
    /// Multiplier on the Hoeffding envelope used as the heavy-bucket threshold.
    pub bucket_threshold_scale: f64,
    /// Multiplier on the noise envelope below which a bucket average is dropped.
    pub average_threshold_scale: f64,
    /// Constant in the accuracy bound handed to local search.
    pub delta_constant: f64,
    pub randomness: RandomnessMode,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig {
            a: 0.2,
            b: 0.1,
            bucket_threshold_scale: 1.0,
            average_threshold_scale: 1.0,
            delta_constant: 1.0,
            randomness: RandomnessMode::Full,
        }
    }
}

/// `ceil(eps * n^(1/3 + a))`.
pub fn good_center_cap(n: usize, epsilon: f64, a: f64) -> usize {
    (epsilon * (n as f64).powf(1.0 / 3.0 + a)).ceil().max(1.0) as usize
}

/// Size of the reduced bucket domain each radius reports into.
pub fn bucket_domain(cap: usize) -> usize {
    (2 * cap).max(64)
}

/// Public hash functions shared by server and clients for one schedule.
struct BucketHashes {
    functions: Vec<LshFunction>,
    reducers: Vec<(u64, u64)>,
    domain: u64,
}

impl BucketHashes {
    fn new(seed: u64, radii: &[f64], n: usize, dim: usize, domain: u64, config: &LdpConfig) -> Result<Self> {
        let mut functions = Vec::with_capacity(radii.len());
        let mut reducers = Vec::with_capacity(radii.len());
        for (i, &r) in radii.iter().enumerate() {
            let params = LshParams::new(r, config.a, config.b, n)?;
            let mut rng = crate::rng::child(seed, i as u64);
            functions.push(sample_lsh(&params, dim, &mut rng));
            reducers.push((rng.random_range(1..MERSENNE_61), rng.random_range(0..MERSENNE_61)));
        }
        Ok(BucketHashes {
            functions,
            reducers,
            domain,
        })
    }

    fn reduced(&self, radius: usize, x: &Point) -> u64 {
        let id = self.functions[radius].bucket_unchecked(x.coords()) as u128;
        let (a, b) = self.reducers[radius];
        let p = MERSENNE_61 as u128;
        (((a as u128 * id + b as u128) % p) as u64) % self.domain
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodCenterOutcome {
    pub candidates: CandidateSet,
    pub transcript: LdpTranscript,
    /// Buckets kept after the first round.
    pub kept: usize,
    pub cap: usize,
    pub ledger: BudgetLedger,
}

/// Two-round discovery of candidate centers.
///
/// Round one: users are split across the radius schedule; each reports the
/// reduced id of its bucket through the frequency oracle, and the server keeps
/// buckets whose estimate clears the threshold. Round two: every user sends one
/// noisy vector. A member of a kept bucket (the first kept bucket containing it)
/// signs `(x, lambda)` with that bucket's public sign; everyone else sends zero.
/// Correlating with each bucket's signs yields its sum and size.
pub fn ldp_good_center<R: Rng + ?Sized>(
    clients: &ClientPool,
    epsilon: f64,
    beta: f64,
    config: &LdpConfig,
    rng: &mut R,
) -> Result<GoodCenterOutcome> {
    check_protocol_params(epsilon, beta)?;
    let n = clients.len();
    if n < 2 {
        return Err(invalid("clients", "need at least two clients"));
    }
    let lambda = clients.lambda();
    let d = clients.dim();
    let radii = radius_schedule(n, lambda);
    let rcount = radii.len();
    let eps1 = epsilon / 2.0;
    let eps2 = epsilon / 2.0;
    let cap = good_center_cap(n, epsilon, config.a);
    let domain = bucket_domain(cap);
    let mut transcript = LdpTranscript::new();

    let seed1: u64 = rng.random();
    let hashes = BucketHashes::new(seed1, &radii, n, d, domain as u64, config)?;
    let group_size = |rho: usize| (n - rho).div_ceil(rcount);
    let matrices: Vec<PublicRandomness> = (0..rcount)
        .map(|rho| PublicRandomness::new(derive_seed(seed1, 1 << 32 | rho as u64), domain, group_size(rho), config.randomness))
        .collect::<Result<_>>()?;
    let reports = clients.respond(0, eps1, |i, x, rng| {
        let rho = i % rcount;
        let y = hashes.reduced(rho, x) as usize;
        Ok(Payload::Bit(grouphist_randomize(y, i / rcount, &matrices[rho], eps1, rng)?))
    })?;

    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    let mut grouped: Vec<Vec<i8>> = (0..rcount).map(|rho| Vec::with_capacity(group_size(rho))).collect();
    for r in &reports {
        grouped[r.user % rcount].push(bit_of(r)?);
    }
    for (rho, bits) in grouped.iter().enumerate() {
        let f_hat = grouphist_aggregate(bits, &matrices[rho], eps1)?;
        let tau = config.bucket_threshold_scale
            * debias_factor(eps1)
            * (2.0 * bits.len() as f64 * (2.0 * domain as f64 * rcount as f64 / beta).ln()).sqrt();
        kept.extend(f_hat.iter().enumerate().filter(|(_, &f)| f >= tau).map(|(j, &f)| (rho, j, f)));
    }
    kept.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    kept.truncate(cap);
    kept.sort_by_key(|&(rho, j, _)| (rho, j));
    transcript.push(LdpRound {
        index: 0,
        broadcast: Broadcast::BucketSchedule {
            seed: seed1,
            radii: radii.clone(),
            domain: domain as u64,
            epsilon: eps1,
        },
        reports,
    });

    let seed2: u64 = rng.random();
    let entries: Vec<(u32, u64)> = kept.iter().map(|&(rho, j, _)| (rho as u32, j as u64)).collect();
    let signs = if entries.is_empty() {
        None
    } else {
        Some(PublicRandomness::new(seed2, entries.len(), n, config.randomness)?)
    };
    let noise_scale = 2.0 * lambda * ((d as f64).sqrt() + 1.0) / eps2;
    let reports = clients.respond(1, eps2, |i, x, rng| {
        let mut v = vec![0.0; d + 1];
        if let Some(z) = &signs {
            if let Some(e) = entries
                .iter()
                .position(|&(rho, j)| hashes.reduced(rho as usize, x) == j)
            {
                let s = z.entry(e, i) as f64;
                v[..d].iter_mut().zip(x.coords()).for_each(|(slot, c)| *slot = s * c);
                v[d] = s * lambda;
            }
        }
        v.iter_mut().for_each(|c| *c += laplace(noise_scale, rng));
        Ok(Payload::Vector(v))
    })?;

    let mut candidates = CandidateSet::default();
    if let Some(z) = &signs {
        let mut sums = vec![vec![0.0; d + 1]; entries.len()];
        for r in &reports {
            let Payload::Vector(v) = &r.payload else {
                return Err(Error::Protocol(format!("user {} sent a non-vector report", r.user)));
            };
            if v.len() != d + 1 {
                return Err(Error::Protocol(format!("user {} sent a vector of length {}", r.user, v.len())));
            }
            for (e, sum) in sums.iter_mut().enumerate() {
                let s = z.entry(e, r.user) as f64;
                sum.iter_mut().zip(v).for_each(|(acc, c)| *acc += s * c);
            }
        }
        let per_report_var = lambda * lambda + 2.0 * noise_scale * noise_scale;
        let tau2 = config.average_threshold_scale
            * (2.0 * n as f64 * per_report_var * (2.0 * entries.len() as f64 / beta).ln()).sqrt()
            / lambda;
        let mut centers = Vec::new();
        let mut provenance = Vec::new();
        for ((rho, j), sum) in entries.iter().zip(&sums) {
            let count = sum[d] / lambda;
            if count < tau2 {
                continue;
            }
            let mean = Point::new(sum[..d].iter().map(|c| c / count).collect())?;
            centers.push(mean.project_to_ball(lambda));
            provenance.push(CandidateProvenance {
                iteration: 0,
                radius: radii[*rho as usize],
                partition: *rho as usize,
                bucket: *j,
                noisy_count: count,
                low_confidence: false,
            });
        }
        candidates = CandidateSet::new(centers, provenance)?;
    }
    transcript.push(LdpRound {
        index: 1,
        broadcast: Broadcast::KeptBuckets {
            seed: seed2,
            entries: entries.clone(),
            epsilon: eps2,
        },
        reports,
    });
    Ok(GoodCenterOutcome {
        candidates,
        transcript,
        kept: entries.len(),
        cap,
        ledger: good_center_ledger(epsilon, rcount)?,
    })
}

/// Round one is parallel over the disjoint user groups; round two is one
/// report per user.
fn good_center_ledger(epsilon: f64, groups: usize) -> Result<BudgetLedger> {
    let half = PrivacyBudget::pure(epsilon / 2.0)?;
    let buckets = (0..groups)
        .map(|rho| BudgetLedger::leaf(format!("bucket reports, radius {rho}"), half))
        .collect();
    Ok(BudgetLedger::sequential(
        "good center",
        PrivacyBudget::pure(epsilon)?,
        vec![
            BudgetLedger::parallel("bucket reports", half, buckets),
            BudgetLedger::leaf("bucket averages", half),
        ],
    ))
}

fn bit_of(r: &LdpReport) -> Result<i8> {
    match r.payload {
        Payload::Bit(b) => Ok(b),
        _ => Err(Error::Protocol(format!("user {} sent a non-bit report", r.user))),
    }
}

/// One round in which every client reports its nearest broadcast center
/// through the frequency oracle. Returns the estimated counts.
pub(crate) fn nearest_center_round<R: Rng + ?Sized>(
    clients: &ClientPool,
    transcript: &mut LdpTranscript,
    centers: &[Point],
    epsilon: f64,
    mode: RandomnessMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let index = transcript.round_count() as u32;
    let seed: u64 = rng.random();
    let z = PublicRandomness::new(seed, centers.len(), clients.len(), mode)?;
    let reports = clients.respond(index, epsilon, |i, x, rng| {
        let (y, _) = nearest_in(x.coords(), centers);
        Ok(Payload::Bit(grouphist_randomize(y, i, &z, epsilon, rng)?))
    })?;
    let bits = reports.iter().map(bit_of).collect::<Result<Vec<_>>>()?;
    let f_hat = grouphist_aggregate(&bits, &z, epsilon)?;
    transcript.push(LdpRound {
        index,
        broadcast: Broadcast::Candidates {
            seed,
            centers: centers.to_vec(),
            epsilon,
        },
        reports,
    });
    Ok(f_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpKMeansOutcome {
    pub centers: CenterSet,
    /// The broadcast candidate pool, including any public filler points.
    pub candidates: Vec<Point>,
    pub estimated_weights: Vec<f64>,
    pub transcript: LdpTranscript,
    /// Accuracy bound handed to local search.
    pub delta: f64,
    /// Number of public filler points appended to reach `k` candidates.
    pub padded: usize,
    pub ledger: BudgetLedger,
}

/// Accuracy bound for the weighted candidate cost:
/// `constant * lambda^2 * sqrt(|Y| n ln(n / beta)) / eps`.
pub fn weighted_cost_delta(constant: f64, lambda: f64, candidates: usize, n: usize, beta: f64, epsilon: f64) -> f64 {
    constant * lambda * lambda * (candidates as f64 * n as f64 * (n as f64 / beta).ln()).sqrt() / epsilon
}

/// Local-model k-means: candidate discovery at half the budget, a frequency
/// round estimating how many users each candidate serves, then local search
/// on the estimated weighted candidates.
pub fn ldp_k_means<R: Rng + ?Sized>(
    clients: &ClientPool,
    k: usize,
    epsilon: f64,
    beta: f64,
    config: &LdpConfig,
    rng: &mut R,
) -> Result<LdpKMeansOutcome> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    check_protocol_params(epsilon, beta)?;
    let good = ldp_good_center(clients, epsilon / 2.0, beta, config, rng)?;
    let mut transcript = good.transcript;
    let mut candidates = good.candidates.points().to_vec();
    let padded = k.saturating_sub(candidates.len());
    candidates.extend(public_filler(clients.dim(), clients.lambda(), padded));

    let f_hat = nearest_center_round(clients, &mut transcript, &candidates, epsilon / 2.0, config.randomness, rng)?;
    let weighted = WeightedDataset::new(candidates.clone(), f_hat.clone(), clients.lambda())?;
    let delta = weighted_cost_delta(
        config.delta_constant,
        clients.lambda(),
        candidates.len(),
        clients.len(),
        beta,
        epsilon / 2.0,
    );
    let oracle = TableCost::weighted(&weighted, &candidates).with_delta(delta);
    let search = noisy_local_search(&oracle, k, clients.len())?;
    Ok(LdpKMeansOutcome {
        centers: search.centers(&candidates)?,
        candidates,
        estimated_weights: f_hat,
        transcript,
        delta,
        padded,
        ledger: BudgetLedger::sequential(
            "ldp k-means",
            PrivacyBudget::pure(epsilon)?,
            vec![
                good.ledger,
                BudgetLedger::leaf("candidate weights", PrivacyBudget::pure(epsilon / 2.0)?),
            ],
        ),
    })
}
