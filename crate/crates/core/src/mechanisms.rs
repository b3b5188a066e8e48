//! Noise primitives: Laplace, Gaussian, a private average of a small-diameter
//! set, and binary randomized response.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::error::{check_beta, check_epsilon, invalid, Error, Result};
use crate::geometry::Point;

/// Per-cell sensitivity of a cell-count histogram: one point moves one count by one.
pub const CELL_COUNT_SENSITIVITY: f64 = 1.0;
/// Grid cell width as a multiple of the diameter bound.
pub const CELL_WIDTH_FACTOR: f64 = 2.0;
/// Clip interval width as a multiple of the diameter bound (selected cell plus one cell per side).
pub const CLIP_WIDTH_FACTOR: f64 = 6.0;

/// One draw from `Lap(scale)`.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn laplace_scale(l1_sensitivity: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(l1_sensitivity.is_finite() && l1_sensitivity >= 0.0) {
        return Err(invalid("sensitivity", format!("must be finite and non-negative, got {l1_sensitivity}")));
    }
    Ok(l1_sensitivity / epsilon)
}

/// Adds independent `Lap(sensitivity / epsilon)` noise to every coordinate.
pub fn laplace_mechanism<R: Rng + ?Sized>(
    value: &[f64],
    l1_sensitivity: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let scale = laplace_scale(l1_sensitivity, epsilon)?;
    Ok(value.iter().map(|v| v + laplace(scale, rng)).collect())
}

/// `sigma = (l2_sensitivity / epsilon) * sqrt(2 ln(1.25 / delta))` for `epsilon, delta` in (0, 1).
pub fn gaussian_sigma(l2_sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("Gaussian mechanism needs epsilon in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("Gaussian mechanism needs delta in (0, 1), got {delta}")));
    }
    if !(l2_sensitivity.is_finite() && l2_sensitivity >= 0.0) {
        return Err(invalid("sensitivity", format!("must be finite and non-negative, got {l2_sensitivity}")));
    }
    Ok(l2_sensitivity / epsilon * (2.0 * (1.25 / delta).ln()).sqrt())
}

pub fn gaussian_mechanism<R: Rng + ?Sized>(
    value: &[f64],
    l2_sensitivity: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sigma = gaussian_sigma(l2_sensitivity, epsilon, delta)?;
    Ok(value
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect())
}

/// Probability that randomized response keeps its input: `e^eps / (e^eps + 1)`.
pub fn rr_keep_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + (-epsilon).exp())
}

/// `table[i][o]`: probability of output `o` given input `i`, index 0 is `+1`, 1 is `-1`.
pub fn rr_probability_table(epsilon: f64) -> Result<[[f64; 2]; 2]> {
    check_epsilon(epsilon)?;
    let keep = rr_keep_probability(epsilon);
    let flip = 1.0 / (1.0 + epsilon.exp());
    Ok([[keep, flip], [flip, keep]])
}

pub fn randomized_response_bit<R: Rng + ?Sized>(x: i8, epsilon: f64, rng: &mut R) -> Result<i8> {
    if x != 1 && x != -1 {
        return Err(invalid("x", format!("randomized response input must be +1 or -1, got {x}")));
    }
    check_epsilon(epsilon)?;
    if rng.random::<f64>() < rr_keep_probability(epsilon) {
        Ok(x)
    } else {
        Ok(-x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AverageNoise {
    #[default]
    Laplace,
    Gaussian,
}

/// The constants a [`noisy_average`] call ran with.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageCalibration {
    pub cell_width: f64,
    pub clip_width: f64,
    pub count_sensitivity: f64,
    pub selection_noise_scale: f64,
    pub confidence_threshold: f64,
    /// L1 (Laplace) or L2 (Gaussian) sensitivity of the clipped mean.
    pub mean_sensitivity: f64,
    /// Laplace scale or Gaussian sigma added to each coordinate of the mean.
    pub mean_noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyAverage {
    pub point: Point,
    pub low_confidence: bool,
    pub calibration: AverageCalibration,
    pub ledger: BudgetLedger,
}

/// Private average of a set whose diameter is at most `r`.
///
/// Half the budget locates, per coordinate, the heaviest cell of a randomly
/// shifted grid of width `2r`; the other half releases the mean of the points
/// clipped to that cell widened by one cell on each side.
pub fn noisy_average<R: Rng + ?Sized>(
    points: &[Point],
    r: f64,
    budget: PrivacyBudget,
    beta: f64,
    noise: AverageNoise,
    rng: &mut R,
) -> Result<NoisyAverage> {
    noisy_average_with_size(points, r, budget, beta, noise, points.len() as f64, rng)
}

/// As [`noisy_average`] but dividing by a public `size` instead of the true count.
pub(crate) fn noisy_average_with_size<R: Rng + ?Sized>(
    points: &[Point],
    r: f64,
    budget: PrivacyBudget,
    beta: f64,
    noise: AverageNoise,
    size: f64,
    rng: &mut R,
) -> Result<NoisyAverage> {
    let first = points.first().ok_or(Error::EmptyDataset)?;
    let d = first.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.dim(),
        });
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(invalid("r", format!("must be finite and positive, got {r}")));
    }
    check_beta(beta)?;
    let size = size.max(1.0);
    let half = budget.epsilon() / 2.0;
    let cell = CELL_WIDTH_FACTOR * r;
    let clip = CLIP_WIDTH_FACTOR * r;
    let df = d as f64;

    let selection_scale = 2.0 * CELL_COUNT_SENSITIVITY / (half / df);
    let confidence_threshold = 2.0 * selection_scale * (2.0 * df / beta).ln();
    let mut low_confidence = false;
    let mut centers = Vec::with_capacity(d);
    for j in 0..d {
        let offset = cell * rng.random::<f64>();
        let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
        for p in points {
            let z = ((p.coords()[j] - offset) / cell).floor() as i64;
            *counts.entry(z).or_insert(0.0) += 1.0;
        }
        let mut best = (i64::MIN, f64::NEG_INFINITY);
        for (&z, &c) in &counts {
            let noisy = c + laplace(selection_scale, rng);
            if noisy > best.1 {
                best = (z, noisy);
            }
        }
        if best.1 < confidence_threshold {
            low_confidence = true;
        }
        centers.push(offset + cell * (best.0 as f64 + 0.5));
    }

    let mut centered_sum = vec![0.0; d];
    for p in points {
        for j in 0..d {
            let v = (p.coords()[j] - centers[j]).clamp(-clip / 2.0, clip / 2.0);
            centered_sum[j] += v;
        }
    }
    let (mean_sensitivity, mean_noise_scale) = match noise {
        AverageNoise::Laplace => {
            let sens = df * clip / size;
            (sens, laplace_scale(sens, half)?)
        }
        AverageNoise::Gaussian => {
            let sens = df.sqrt() * clip / size;
            (sens, gaussian_sigma(sens, half, budget.delta())?)
        }
    };
    let coords: Vec<f64> = (0..d)
        .map(|j| {
            let z = match noise {
                AverageNoise::Laplace => laplace(mean_noise_scale, rng),
                AverageNoise::Gaussian => {
                    let g: f64 = StandardNormal.sample(rng);
                    mean_noise_scale * g
                }
            };
            centers[j] + centered_sum[j] / size + z
        })
        .collect();

    let ledger = BudgetLedger::sequential(
        "noisy average",
        budget,
        vec![
            BudgetLedger::leaf("cell selection", PrivacyBudget::pure(half)?),
            BudgetLedger::leaf("clipped mean", PrivacyBudget::new(half, budget.delta())?),
        ],
    );
    Ok(NoisyAverage {
        point: Point::from_vec_unchecked(coords),
        low_confidence,
        calibration: AverageCalibration {
            cell_width: cell,
            clip_width: clip,
            count_sensitivity: CELL_COUNT_SENSITIVITY,
            selection_noise_scale: selection_scale,
            confidence_threshold,
            mean_sensitivity,
            mean_noise_scale,
        },
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn gaussian_sigma_matches_closed_form() {
        let s = gaussian_sigma(1.0, 0.5, 1e-5).unwrap();
        let expected = 2.0 * (2.0 * (125_000.0f64).ln()).sqrt();
        assert!((s - expected).abs() < 1e-12);
        assert!(gaussian_sigma(1.0, 1.0, 1e-5).is_err());
        assert!(gaussian_sigma(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn laplace_rejects_bad_epsilon() {
        let mut rng = seeded(1);
        assert!(laplace_mechanism(&[0.0], 1.0, 0.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[0.0], 1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_has_the_right_spread() {
        let mut rng = seeded(2);
        let n = 200_000;
        let scale = 3.0;
        let mean_abs: f64 = (0..n).map(|_| laplace(scale, &mut rng).abs()).sum::<f64>() / n as f64;
        assert!((mean_abs - scale).abs() < 0.03);
    }

    #[test]
    fn rr_table_ratio_is_exp_epsilon() {
        for eps in [0.1, 1.0, 5.0] {
            let t = rr_probability_table(eps).unwrap();
            assert!((t[0][0] / t[0][1] - f64::exp(eps)).abs() / f64::exp(eps) < 1e-12);
            assert!((t[0][0] + t[0][1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rr_rejects_non_sign_input() {
        let mut rng = seeded(3);
        assert!(randomized_response_bit(0, 1.0, &mut rng).is_err());
        assert!(randomized_response_bit(2, 1.0, &mut rng).is_err());
    }

    #[test]
    fn noisy_average_sensitivity_constants() {
        let mut rng = seeded(4);
        let pts: Vec<Point> = (0..50).map(|i| Point::new(vec![0.1 + i as f64 * 1e-4, 0.2]).unwrap()).collect();
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let out = noisy_average(&pts, 0.01, budget, 0.05, AverageNoise::Laplace, &mut rng).unwrap();
        let c = &out.calibration;
        assert_eq!(c.count_sensitivity, 1.0);
        assert!((c.clip_width - 0.06).abs() < 1e-15);
        assert!((c.mean_sensitivity - 2.0 * 0.06 / 50.0).abs() < 1e-15);
        assert!((c.mean_noise_scale - c.mean_sensitivity / 0.5).abs() < 1e-15);
        out.ledger.audit_tight().unwrap();
        assert!(out.ledger.total().approx_eq(&budget));
    }

    #[test]
    fn noisy_average_rejects_empty_input() {
        let mut rng = seeded(5);
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        assert!(noisy_average(&[], 0.1, budget, 0.05, AverageNoise::Laplace, &mut rng).is_err());
    }
}
