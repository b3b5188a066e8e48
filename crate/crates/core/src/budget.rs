//! Privacy budgets and the composition ledger.

use crate::error::{check_epsilon, invalid, Error, Result};

/// Relative tolerance used when comparing composed and allocated budgets.
pub const LEDGER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Even share under basic composition across `parts` sequential steps.
    pub fn split(&self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(invalid("parts", "must be at least 1"));
        }
        Ok(PrivacyBudget {
            epsilon: self.epsilon / parts as f64,
            delta: self.delta / parts as f64,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        PrivacyBudget {
            epsilon: self.epsilon * factor,
            delta: self.delta * factor,
        }
    }

    pub fn plus(&self, other: &PrivacyBudget) -> Self {
        PrivacyBudget {
            epsilon: self.epsilon + other.epsilon,
            delta: self.delta + other.delta,
        }
    }

    pub fn max(&self, other: &PrivacyBudget) -> Self {
        PrivacyBudget {
            epsilon: self.epsilon.max(other.epsilon),
            delta: self.delta.max(other.delta),
        }
    }

    pub fn fits_within(&self, other: &PrivacyBudget) -> bool {
        self.epsilon <= other.epsilon * (1.0 + LEDGER_TOLERANCE) + f64::MIN_POSITIVE
            && self.delta <= other.delta * (1.0 + LEDGER_TOLERANCE) + f64::MIN_POSITIVE
    }

    pub fn approx_eq(&self, other: &PrivacyBudget) -> bool {
        self.fits_within(other) && other.fits_within(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Composition {
    /// A single mechanism invocation.
    Leaf,
    /// Children run on the same data; budgets add.
    Sequential,
    /// Children run on disjoint data; the maximum applies.
    Parallel,
    /// `steps` pure-DP steps of `step_epsilon` each, bounded by advanced
    /// composition with the node's whole delta as slack.
    Advanced { steps: usize, step_epsilon: f64 },
}

/// A tree of budget allocations.
///
/// Every node carries the budget allocated to it. `composed` recomputes what
/// the children actually consume under the node's rule; `audit` checks that
/// no node consumes more than it was allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    label: String,
    rule: Composition,
    allocated: PrivacyBudget,
    children: Vec<BudgetLedger>,
}

/// One flattened ledger row.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerLine {
    pub depth: usize,
    pub label: String,
    pub rule: &'static str,
    pub epsilon: f64,
    pub delta: f64,
}

impl BudgetLedger {
    pub fn leaf(label: impl Into<String>, spent: PrivacyBudget) -> Self {
        BudgetLedger {
            label: label.into(),
            rule: Composition::Leaf,
            allocated: spent,
            children: Vec::new(),
        }
    }

    pub fn sequential(label: impl Into<String>, allocated: PrivacyBudget, children: Vec<BudgetLedger>) -> Self {
        BudgetLedger {
            label: label.into(),
            rule: Composition::Sequential,
            allocated,
            children,
        }
    }

    pub fn parallel(label: impl Into<String>, allocated: PrivacyBudget, children: Vec<BudgetLedger>) -> Self {
        BudgetLedger {
            label: label.into(),
            rule: Composition::Parallel,
            allocated,
            children,
        }
    }

    pub fn advanced(label: impl Into<String>, allocated: PrivacyBudget, steps: usize, step_epsilon: f64) -> Self {
        BudgetLedger {
            label: label.into(),
            rule: Composition::Advanced { steps, step_epsilon },
            allocated,
            children: Vec::new(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rule(&self) -> Composition {
        self.rule
    }

    pub fn children(&self) -> &[BudgetLedger] {
        &self.children
    }

    /// The budget this node was allocated and accounts for.
    pub fn total(&self) -> PrivacyBudget {
        self.allocated
    }

    /// What the node's contents consume under its composition rule.
    pub fn composed(&self) -> PrivacyBudget {
        match self.rule {
            Composition::Leaf => self.allocated,
            Composition::Sequential => self
                .children
                .iter()
                .fold(PrivacyBudget::ZERO, |acc, c| acc.plus(&c.total())),
            Composition::Parallel => self
                .children
                .iter()
                .fold(PrivacyBudget::ZERO, |acc, c| acc.max(&c.total())),
            Composition::Advanced { steps, step_epsilon } => PrivacyBudget {
                epsilon: advanced_composition_epsilon(steps, step_epsilon, self.allocated.delta),
                delta: self.allocated.delta,
            },
        }
    }

    /// Checks every node: composed consumption never exceeds the allocation.
    pub fn audit(&self) -> Result<()> {
        let composed = self.composed();
        if !composed.fits_within(&self.allocated) {
            return Err(Error::Ledger(format!(
                "`{}` consumes ({}, {}) but was allocated ({}, {})",
                self.label, composed.epsilon, composed.delta, self.allocated.epsilon, self.allocated.delta
            )));
        }
        self.children.iter().try_for_each(BudgetLedger::audit)
    }

    /// Audit plus exactness: sequential nodes must spend their whole allocation.
    pub fn audit_tight(&self) -> Result<()> {
        self.audit()?;
        self.check_tight()
    }

    fn check_tight(&self) -> Result<()> {
        if self.rule == Composition::Sequential && !self.composed().approx_eq(&self.allocated) {
            let c = self.composed();
            return Err(Error::Ledger(format!(
                "`{}` sequential children sum to ({}, {}) instead of ({}, {})",
                self.label, c.epsilon, c.delta, self.allocated.epsilon, self.allocated.delta
            )));
        }
        self.children.iter().try_for_each(BudgetLedger::check_tight)
    }

    pub fn lines(&self) -> Vec<LedgerLine> {
        let mut out = Vec::new();
        self.collect_lines(0, &mut out);
        out
    }

    fn collect_lines(&self, depth: usize, out: &mut Vec<LedgerLine>) {
        out.push(LedgerLine {
            depth,
            label: self.label.clone(),
            rule: match self.rule {
                Composition::Leaf => "leaf",
                Composition::Sequential => "sequential",
                Composition::Parallel => "parallel",
                Composition::Advanced { .. } => "advanced",
            },
            epsilon: self.allocated.epsilon,
            delta: self.allocated.delta,
        });
        for c in &self.children {
            c.collect_lines(depth + 1, out);
        }
    }
}

/// Epsilon of `steps` adaptive `step_epsilon`-DP steps with slack `delta`:
/// `sqrt(2 T ln(1/delta)) e + T e (exp(e) - 1)`.
pub fn advanced_composition_epsilon(steps: usize, step_epsilon: f64, delta: f64) -> f64 {
    let t = steps as f64;
    let basic = t * step_epsilon;
    if delta <= 0.0 {
        return basic;
    }
    let adv = (2.0 * t * (1.0 / delta).ln()).sqrt() * step_epsilon + t * step_epsilon * step_epsilon.exp_m1();
    adv.min(basic)
}
