//! Frequency oracle built from one randomized bit per user.
//!
//! Every user `i` holding domain element `y_i` looks up the public sign
//! `Z[y_i, i]` and sends it through randomized response. The server estimates
//! the multiplicity of `y` by correlating the reports with row `y` of `Z`.

use rand::{Rng, SeedableRng};

use crate::error::{check_beta, check_epsilon, invalid, Error, Result};
use crate::lsh::MERSENNE_61;
use crate::mechanisms::randomized_response_bit;
use crate::rng::{seeded, splitmix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomnessMode {
    /// Independent pseudo-random signs.
    #[default]
    Full,
    /// Signs from a random polynomial of degree `k - 1`; any `k` entries are independent.
    KWise(usize),
}

/// The public sign matrix, `rows` domain elements by `cols` users.
///
/// Entries are computed on demand from the seed, so the matrix is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicRandomness {
    seed: u64,
    rows: usize,
    cols: usize,
    mode: RandomnessMode,
    coefficients: Vec<u64>,
}

impl PublicRandomness {
    pub fn new(seed: u64, rows: usize, cols: usize, mode: RandomnessMode) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("shape", format!("need at least one row and column, got {rows} x {cols}")));
        }
        let coefficients = match mode {
            RandomnessMode::Full => Vec::new(),
            RandomnessMode::KWise(k) => {
                if k == 0 {
                    return Err(invalid("k", "k-wise independence needs k >= 1"));
                }
                let mut rng = seeded(seed);
                (0..k).map(|_| rng.random_range(0..MERSENNE_61)).collect()
            }
        };
        Ok(PublicRandomness {
            seed,
            rows,
            cols,
            mode,
            coefficients,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> RandomnessMode {
        self.mode
    }

    /// `Z[row, col]` in `{-1, +1}`.
    pub fn get(&self, row: usize, col: usize) -> Result<i8> {
        if row >= self.rows || col >= self.cols {
            return Err(invalid(
                "index",
                format!("({row}, {col}) outside the {} x {} matrix", self.rows, self.cols),
            ));
        }
        Ok(self.entry(row, col))
    }

    #[inline]
    pub(crate) fn entry(&self, row: usize, col: usize) -> i8 {
        let x = row as u64 * self.cols as u64 + col as u64;
        let bit = match self.mode {
            RandomnessMode::Full => splitmix64(self.seed ^ splitmix64(x)) >> 63,
            RandomnessMode::KWise(_) => {
                let p = MERSENNE_61 as u128;
                let point = (x as u128 + 1) % p;
                let mut acc: u128 = 0;
                for &c in &self.coefficients {
                    acc = (acc * point + c as u128) % p;
                }
                (acc & 1) as u64
            }
        };
        if bit == 1 {
            1
        } else {
            -1
        }
    }
}

/// `(e^eps + 1) / (e^eps - 1)`, the debiasing factor of one randomized bit.
pub fn debias_factor(epsilon: f64) -> f64 {
    1.0 / (epsilon / 2.0).tanh()
}

/// Hoeffding bound on `|f_hat(y) - f(y)|` holding with probability `1 - beta` for one `y`.
pub fn grouphist_envelope(n: usize, epsilon: f64, beta: f64) -> f64 {
    debias_factor(epsilon) * (2.0 * n as f64 * (2.0 / beta).ln()).sqrt()
}

/// The local randomizer of user `user` holding domain element `y`.
pub fn grouphist_randomize<R: Rng + ?Sized>(
    y: usize,
    user: usize,
    z: &PublicRandomness,
    epsilon: f64,
    rng: &mut R,
) -> Result<i8> {
    let sign = z.get(y, user)?;
    randomized_response_bit(sign, epsilon, rng)
}

/// `f_hat(y) = debias * sum_i report_i Z[y, i]` for every row `y`.
pub fn grouphist_aggregate(reports: &[i8], z: &PublicRandomness, epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if reports.len() != z.cols() {
        return Err(Error::Protocol(format!(
            "expected {} reports, received {}",
            z.cols(),
            reports.len()
        )));
    }
    if let Some(bad) = reports.iter().find(|&&r| r != 1 && r != -1) {
        return Err(Error::Protocol(format!("report {bad} is not a sign")));
    }
    let factor = debias_factor(epsilon);
    Ok((0..z.rows())
        .map(|y| {
            let corr: i64 = reports
                .iter()
                .enumerate()
                .map(|(i, &r)| (r * z.entry(y, i)) as i64)
                .sum();
            factor * corr as f64
        })
        .collect())
}

/// `sum_{y in Q} sigma(y) f_hat(y)`.
pub fn grouphist_group_query(f_hat: &[f64], q: &[usize], sigma: &[f64]) -> Result<f64> {
    if q.len() != sigma.len() {
        return Err(invalid("sigma", "one weight per queried element is required"));
    }
    let mut total = 0.0;
    for (&y, &s) in q.iter().zip(sigma) {
        if !(0.0..=1.0).contains(&s) {
            return Err(invalid("sigma", format!("weights must lie in [0, 1], got {s}")));
        }
        let v = f_hat
            .get(y)
            .ok_or_else(|| invalid("q", format!("element {y} outside the domain of size {}", f_hat.len())))?;
        total += s * v;
    }
    Ok(total)
}

/// Seeded generator for user `user` in round `round`.
pub(crate) fn client_rng(seed: u64, round: u32, user: usize) -> crate::rng::DpRng {
    let s = splitmix64(seed ^ splitmix64(((round as u64) << 40) ^ user as u64));
    crate::rng::DpRng::seed_from_u64(s)
}

/// Checks shared by the protocols.
pub(crate) fn check_protocol_params(epsilon: f64, beta: f64) -> Result<()> {
    check_epsilon(epsilon)?;
    check_beta(beta)
}
