//! The end-to-end centralized pipeline.

use rand::Rng;

use crate::budget::{BudgetLedger, PrivacyBudget};
use crate::candidates::{private_k_means_candidates, public_filler, CandidateConfig, KMeansCandidates};
use crate::error::{invalid, Result};
use crate::geometry::{CenterSet, Dataset, Point};
use crate::selection::{private_local_search, PrivateSearchOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedOutcome {
    pub centers: CenterSet,
    /// The pool local search chose from, including any public filler points.
    pub candidates: Vec<Point>,
    pub padded: usize,
    pub discovery: KMeansCandidates,
    pub search: PrivateSearchOutcome,
    pub ledger: BudgetLedger,
}

/// Half the budget finds candidates, the other half selects `k` of them.
///
/// When fewer than `k` candidates survive, data-independent filler points are
/// appended so selection always has a pool of at least `k`.
pub fn centralized_k_means<R: Rng + ?Sized>(
    s: &Dataset,
    k: usize,
    budget: PrivacyBudget,
    beta: f64,
    config: &CandidateConfig,
    rng: &mut R,
) -> Result<CentralizedOutcome> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    let half = budget.scale(0.5);
    let discovery = private_k_means_candidates(s, k, half, beta, config, rng)?;
    let mut candidates = discovery.candidates.points().to_vec();
    let padded = k.saturating_sub(candidates.len());
    candidates.extend(public_filler(s.dim(), s.lambda(), padded));
    let search = private_local_search(s, &candidates, k, half, rng)?;
    let ledger = BudgetLedger::sequential(
        "centralized k-means",
        budget,
        vec![discovery.ledger.clone(), search.ledger.clone()],
    );
    Ok(CentralizedOutcome {
        centers: search.centers.clone(),
        candidates,
        padded,
        discovery,
        search,
        ledger,
    })
}
