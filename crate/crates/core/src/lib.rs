//! Differentially private k-means clustering.
//!
//! The centralized pipeline finds a small pool of candidate centers with
//! locality-sensitive hashing and private averaging, then picks `k` of them
//! by private local search. The local-model pipeline runs the same idea as a
//! constant-round protocol over randomized reports.

pub mod baseline;
pub mod budget;
pub mod candidates;
pub mod coreset;
pub mod error;
pub mod geometry;
pub mod ldp;
pub mod lsh;
pub mod mechanisms;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use budget::{BudgetLedger, PrivacyBudget};
pub use error::{Error, Result};
pub use geometry::{cost, nearest, opt_over_candidates, weighted_cost, CenterSet, Dataset, Point, WeightedDataset};
