//! Choosing k centers out of a candidate pool by swap-based local search.

use rand::Rng;

use crate::budget::{advanced_composition_epsilon, BudgetLedger, PrivacyBudget};
use crate::error::{invalid, Error, Result};
use crate::geometry::{cost, CenterSet, Dataset, DistanceTable, Point, WeightedDataset};

/// Evaluates a clustering cost for subsets of a fixed candidate pool.
///
/// `delta` is the declared bound on how far the returned value may be from
/// the true cost; zero for an exact oracle.
pub trait CostOracle {
    fn candidate_count(&self) -> usize;

    fn evaluate(&self, subset: &[usize]) -> f64;

    fn delta(&self) -> f64;

    /// `out[p][y]` is the cost of `current` with position `p` replaced by candidate `y`.
    fn swap_costs(&self, current: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.candidate_count()]; current.len()];
        let mut trial = current.to_vec();
        for p in 0..current.len() {
            for y in 0..self.candidate_count() {
                trial[p] = y;
                out[p][y] = self.evaluate(&trial);
            }
            trial[p] = current[p];
        }
        out
    }
}

/// Exact (optionally weighted) cost over a precomputed distance table.
#[derive(Debug, Clone)]
pub struct TableCost {
    table: DistanceTable,
    weights: Vec<f64>,
    delta: f64,
}

impl TableCost {
    pub fn exact(s: &Dataset, candidates: &[Point]) -> Self {
        TableCost {
            table: DistanceTable::new(s.points(), candidates),
            weights: vec![1.0; s.len()],
            delta: 0.0,
        }
    }

    pub fn weighted(b: &WeightedDataset, candidates: &[Point]) -> Self {
        TableCost {
            table: DistanceTable::new(b.points(), candidates),
            weights: b.weights().to_vec(),
            delta: 0.0,
        }
    }

    /// Declares a non-zero accuracy bound, switching local search to its unguarded form.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

impl CostOracle for TableCost {
    fn candidate_count(&self) -> usize {
        self.table.cols()
    }

    fn evaluate(&self, subset: &[usize]) -> f64 {
        self.table.subset_cost(&self.weights, subset)
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn swap_costs(&self, current: &[usize]) -> Vec<Vec<f64>> {
        let k = current.len();
        let m = self.table.cols();
        let mut out = vec![vec![0.0; m]; k];
        for r in 0..self.table.rows() {
            let row = self.table.row(r);
            let w = self.weights[r];
            let (mut best, mut best_pos, mut second) = (f64::INFINITY, usize::MAX, f64::INFINITY);
            for (p, &j) in current.iter().enumerate() {
                let d = row[j];
                if d < best {
                    second = best;
                    best = d;
                    best_pos = p;
                } else if d < second {
                    second = d;
                }
            }
            for (p, acc) in out.iter_mut().enumerate() {
                let without = if p == best_pos { second } else { best };
                for (y, slot) in acc.iter_mut().enumerate() {
                    *slot += w * without.min(row[y]);
                }
            }
        }
        out
    }
}

/// `max(1, ceil(2 k log2 n))`.
pub fn local_search_steps(k: usize, n: usize) -> usize {
    ((2.0 * k as f64 * (n.max(1) as f64).log2()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchOutcome {
    /// Chosen candidate indices, ascending.
    pub indices: Vec<usize>,
    /// Oracle value of the initial state and after every executed step.
    pub trajectory: Vec<f64>,
    pub steps_run: usize,
}

impl LocalSearchOutcome {
    pub fn centers(&self, candidates: &[Point]) -> Result<CenterSet> {
        CenterSet::new(self.indices.iter().map(|&i| candidates[i].clone()).collect())
    }

    pub fn final_value(&self) -> f64 {
        *self.trajectory.last().expect("trajectory starts with the initial state")
    }
}

/// Best proper swap of `current` under `oracle`: `(position, candidate, new value)`.
/// Equal values prefer the lexicographically smallest (removed index, added index).
fn best_swap(oracle: &dyn CostOracle, current: &[usize]) -> Option<(usize, usize, f64)> {
    let costs = oracle.swap_costs(current);
    let mut best: Option<(usize, usize, f64)> = None;
    for (p, row) in costs.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if current.contains(&y) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, by, bc)) => c < bc || (c == bc && (current[p], y) < (current[bp], by)),
            };
            if better {
                best = Some((p, y, c));
            }
        }
    }
    best
}

/// Swap-based local search over `oracle`, starting from the first `k` candidates.
///
/// With an exact oracle (`delta == 0`) a step that would not improve ends the
/// search. With `delta > 0` the best swap is always taken.
pub fn noisy_local_search(oracle: &dyn CostOracle, k: usize, n: usize) -> Result<LocalSearchOutcome> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let m = oracle.candidate_count();
    if k > m {
        return Err(Error::TooFewPoints { k, available: m });
    }
    let steps = local_search_steps(k, n);
    let mut current: Vec<usize> = (0..k).collect();
    let mut value = oracle.evaluate(&current);
    let mut trajectory = vec![value];
    let mut steps_run = 0;
    for _ in 0..steps {
        let Some((p, y, c)) = best_swap(oracle, &current) else {
            break;
        };
        if oracle.delta() == 0.0 && value - c <= 0.0 {
            break;
        }
        current[p] = y;
        current.sort_unstable();
        value = c;
        trajectory.push(value);
        steps_run += 1;
    }
    Ok(LocalSearchOutcome {
        indices: current,
        trajectory,
        steps_run,
    })
}

/// A swap found by exhaustive evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Swap {
    pub remove: usize,
    pub add: usize,
    pub new_cost: f64,
    pub improvement: f64,
}

/// Largest product `n * k * |Y|` accepted by [`best_swap_bruteforce`].
pub const MAX_BRUTEFORCE_WORK: usize = 50_000_000;

/// Exhaustive best proper swap of `current` (indices into `candidates`) under the exact cost of `s`.
pub fn best_swap_bruteforce(s: &Dataset, candidates: &[Point], current: &[usize]) -> Result<Option<Swap>> {
    if current.is_empty() {
        return Err(Error::EmptyCenters);
    }
    if s.len() * current.len() * candidates.len() > MAX_BRUTEFORCE_WORK {
        return Err(Error::EnumerationTooLarge {
            reason: format!(
                "n = {}, k = {}, |Y| = {} exceeds the exhaustive swap budget",
                s.len(),
                current.len(),
                candidates.len()
            ),
        });
    }
    let centers_of = |idx: &[usize]| CenterSet::new(idx.iter().map(|&i| candidates[i].clone()).collect());
    let base = cost(s, &centers_of(current)?)?;
    let mut removal_order: Vec<usize> = current.to_vec();
    removal_order.sort_unstable();
    let mut best: Option<Swap> = None;
    for &x in &removal_order {
        for y in 0..candidates.len() {
            if current.contains(&y) {
                continue;
            }
            let trial: Vec<usize> = current.iter().map(|&c| if c == x { y } else { c }).collect();
            let c = cost(s, &centers_of(&trial)?)?;
            if best.is_none_or(|b| c < b.new_cost) {
                best = Some(Swap {
                    remove: x,
                    add: y,
                    new_cost: c,
                    improvement: base - c,
                });
            }
        }
    }
    Ok(best)
}

/// `log Pr[i] = eps * s_i / (2 sens) - logsumexp`.
pub fn exponential_mechanism_log_probs(scores: &[f64], epsilon: f64, sensitivity: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|s| epsilon * s / (2.0 * sensitivity)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn sample_exponential<R: Rng + ?Sized>(scores: &[f64], epsilon: f64, sensitivity: f64, rng: &mut R) -> usize {
    let lp = exponential_mechanism_log_probs(scores, epsilon, sensitivity);
    let mut u: f64 = rng.random();
    for (i, l) in lp.iter().enumerate() {
        let p = l.exp();
        if u < p {
            return i;
        }
        u -= p;
    }
    lp.len() - 1
}

/// Change in `cost_S(D)` when one point of `S` is replaced, with `S` and the
/// candidates in `B(0, lambda)`: one squared distance of at most `(2 lambda)^2`.
pub fn cost_sensitivity(lambda: f64) -> f64 {
    4.0 * lambda * lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivateSearchOutcome {
    pub centers: CenterSet,
    pub indices: Vec<usize>,
    pub steps: usize,
    pub step_epsilon: f64,
    pub ledger: BudgetLedger,
}

/// Per-step epsilon: `eps / (2 sqrt(2 T ln(1/delta)))` when advanced composition
/// keeps the total within `eps`, otherwise the larger of that and `eps / T`.
pub fn private_step_epsilon(budget: PrivacyBudget, steps: usize) -> f64 {
    let eps = budget.epsilon();
    let basic = eps / steps as f64;
    if budget.delta() <= 0.0 {
        return basic;
    }
    let adv = eps / (2.0 * (2.0 * steps as f64 * (1.0 / budget.delta()).ln()).sqrt());
    if advanced_composition_epsilon(steps, adv, budget.delta()) <= eps {
        adv.max(basic)
    } else {
        basic
    }
}

/// Local search where each step samples a move with the exponential mechanism.
///
/// Moves are every `(x, y)` with `x` in the current set and `y` either a
/// candidate outside it or `x` itself (staying put). Candidates are projected
/// onto the data ball first. Only the final state is released.
pub fn private_local_search<R: Rng + ?Sized>(
    s: &Dataset,
    candidates: &[Point],
    k: usize,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<PrivateSearchOutcome> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k > candidates.len() {
        return Err(Error::TooFewPoints {
            k,
            available: candidates.len(),
        });
    }
    let pool: Vec<Point> = candidates.iter().map(|c| c.project_to_ball(s.lambda())).collect();
    let oracle = TableCost::exact(s, &pool);
    let steps = local_search_steps(k, s.len());
    let step_epsilon = private_step_epsilon(budget, steps);
    let sensitivity = cost_sensitivity(s.lambda());
    let mut current: Vec<usize> = (0..k).collect();
    for _ in 0..steps {
        let costs = oracle.swap_costs(&current);
        let mut moves = Vec::new();
        let mut scores = Vec::new();
        for (p, row) in costs.iter().enumerate() {
            for (y, &c) in row.iter().enumerate() {
                if y == current[p] || !current.contains(&y) {
                    moves.push((p, y));
                    scores.push(-c);
                }
            }
        }
        let (p, y) = moves[sample_exponential(&scores, step_epsilon, sensitivity, rng)];
        current[p] = y;
        current.sort_unstable();
    }
    let centers = CenterSet::new(current.iter().map(|&i| pool[i].clone()).collect())?;
    Ok(PrivateSearchOutcome {
        centers,
        indices: current,
        steps,
        step_epsilon,
        ledger: BudgetLedger::advanced("private local search", budget, steps, step_epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), 1.0).unwrap()
    }

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new(vec![x]).unwrap()).collect()
    }

    #[test]
    fn fast_swap_costs_match_direct_evaluation() {
        let s = line(&[-0.9, -0.5, -0.1, 0.0, 0.3, 0.8, 1.0]);
        let y = pts(&[-0.7, 0.0, 0.5, 0.9, -0.2]);
        let oracle = TableCost::exact(&s, &y);
        let current = vec![0, 2];
        let fast = oracle.swap_costs(&current);
        for (p, row) in fast.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let mut trial = current.clone();
                trial[p] = j;
                assert!((c - oracle.evaluate(&trial)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_local_search_never_worsens() {
        let s = line(&[-0.9, -0.8, 0.1, 0.2, 0.9]);
        let y = pts(&[0.0, 0.05, -0.85, 0.9, 0.15]);
        let out = noisy_local_search(&TableCost::exact(&s, &y), 2, s.len()).unwrap();
        for w in out.trajectory.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn step_count() {
        assert_eq!(local_search_steps(2, 16), 16);
        assert_eq!(local_search_steps(3, 10), 20);
        assert_eq!(local_search_steps(1, 1), 1);
    }

    #[test]
    fn bruteforce_swap_at_optimum_does_not_improve() {
        let s = line(&[-0.5, -0.4, 0.4, 0.5]);
        let y = pts(&[-0.45, 0.45, 0.0, 1.0]);
        let swap = best_swap_bruteforce(&s, &y, &[0, 1]).unwrap().unwrap();
        assert!(swap.improvement <= 0.0);
    }

    #[test]
    fn exponential_log_probs_normalize() {
        let scores = [-1.0, -2.0, -0.5, -3.0];
        let lp = exponential_mechanism_log_probs(&scores, 1.5, 2.0);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((lp[0] - lp[1] - 1.5 * 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn private_search_ledger_audits() {
        let s = line(&[-0.9, -0.8, 0.1, 0.2, 0.9]);
        let y = pts(&[0.0, 0.05, -0.85, 0.9]);
        let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
        let out = private_local_search(&s, &y, 2, budget, &mut seeded(3)).unwrap();
        out.ledger.audit().unwrap();
        assert!(out.ledger.total().approx_eq(&budget));
        assert_eq!(out.centers.len(), 2);
    }
}
