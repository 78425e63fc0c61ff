//! Deep-ensemble decomposition of predictive uncertainty.
//!
//! For member predictions `p_1 … p_M` of one next-token step:
//!
//! * total      `H(p̄)` with `p̄ = (1/M) Σ p_m`
//! * aleatoric  `(1/M) Σ H(p_m)`
//! * epistemic  `total − aleatoric`, non-negative by concavity of entropy
//!
//! Members are weighted uniformly and averaged in probability space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Categorical, Nats};

/// Slack allowed on the Jensen gap before it is treated as a bug.
pub const JENSEN_TOLERANCE: f64 = 1e-9;

/// Default ensemble size.
pub const DEFAULT_MEMBERS: usize = 5;

/// Member predictions for a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDistribution {
    members: Vec<Categorical>,
}

impl EnsembleDistribution {
    pub fn new(members: Vec<Categorical>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let n = first.len();
        if let Some(bad) = members.iter().find(|m| m.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(EnsembleDistribution { members })
    }

    pub fn members(&self) -> &[Categorical] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.members[0].len()
    }

    /// Uniform mixture of the members. Identical members aggregate to
    /// themselves exactly.
    pub fn aggregate(&self) -> Categorical {
        let first = &self.members[0];
        if self.members.iter().all(|m| m == first) {
            return first.clone();
        }
        let weights = vec![1.0; self.members.len()];
        Categorical::mixture(&self.members, &weights)
            .expect("members validated at construction")
    }

    /// Mean member entropy.
    pub fn aleatoric(&self) -> Nats {
        let sum: f64 = self.members.iter().map(|m| m.entropy().get()).sum();
        Nats::new(sum / self.members.len() as f64)
    }

    pub fn epistemic(&self) -> Nats {
        self.decompose().epistemic()
    }

    pub fn decompose(&self) -> UncertaintyBreakdown {
        self.decompose_with(&self.aggregate())
    }

    /// Decomposition given an already computed aggregate.
    pub(crate) fn decompose_with(&self, aggregate: &Categorical) -> UncertaintyBreakdown {
        let total = aggregate.entropy().get();
        let aleatoric = self.aleatoric().get();
        UncertaintyBreakdown::from_total_and_aleatoric(total, aleatoric)
    }
}

/// Which part of the predictive uncertainty to look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyKind {
    Total,
    Aleatoric,
    Epistemic,
}

impl UncertaintyKind {
    pub const ALL: [UncertaintyKind; 3] = [
        UncertaintyKind::Total,
        UncertaintyKind::Aleatoric,
        UncertaintyKind::Epistemic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UncertaintyKind::Total => "total",
            UncertaintyKind::Aleatoric => "aleatoric",
            UncertaintyKind::Epistemic => "epistemic",
        }
    }
}

impl fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UncertaintyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "total" => Ok(UncertaintyKind::Total),
            "aleatoric" => Ok(UncertaintyKind::Aleatoric),
            "epistemic" => Ok(UncertaintyKind::Epistemic),
            other => Err(Error::invalid_config(
                "kind",
                format!("unknown uncertainty kind `{other}`"),
            )),
        }
    }
}

/// Per-step uncertainty. `total == aleatoric + epistemic` holds exactly in
/// floating point: the stored total is the sum of the two parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "BreakdownDoc")]
pub struct UncertaintyBreakdown {
    total: Nats,
    aleatoric: Nats,
    epistemic: Nats,
}

impl UncertaintyBreakdown {
    pub const ZERO: UncertaintyBreakdown = UncertaintyBreakdown {
        total: Nats::ZERO,
        aleatoric: Nats::ZERO,
        epistemic: Nats::ZERO,
    };

    /// Builds a breakdown from the entropy of the aggregate and the mean
    /// member entropy. A Jensen gap below zero within [`JENSEN_TOLERANCE`]
    /// is rounding noise and is clamped to zero.
    pub fn from_total_and_aleatoric(total: f64, aleatoric: f64) -> Self {
        let gap = total - aleatoric;
        debug_assert!(
            gap >= -JENSEN_TOLERANCE,
            "negative epistemic uncertainty {gap}"
        );
        let epistemic = gap.max(0.0);
        UncertaintyBreakdown {
            total: Nats::new(aleatoric + epistemic),
            aleatoric: Nats::new(aleatoric),
            epistemic: Nats::new(epistemic),
        }
    }

    pub fn total(&self) -> Nats {
        self.total
    }

    pub fn aleatoric(&self) -> Nats {
        self.aleatoric
    }

    pub fn epistemic(&self) -> Nats {
        self.epistemic
    }

    pub fn get(&self, kind: UncertaintyKind) -> f64 {
        match kind {
            UncertaintyKind::Total => self.total.get(),
            UncertaintyKind::Aleatoric => self.aleatoric.get(),
            UncertaintyKind::Epistemic => self.epistemic.get(),
        }
    }
}

#[derive(Deserialize)]
struct BreakdownDoc {
    total: f64,
    aleatoric: f64,
    epistemic: f64,
}

impl TryFrom<BreakdownDoc> for UncertaintyBreakdown {
    type Error = Error;

    fn try_from(d: BreakdownDoc) -> Result<Self> {
        let parts = [d.total, d.aleatoric, d.epistemic];
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvariantViolation(format!(
                "uncertainty components must be finite and non-negative, found {parts:?}"
            )));
        }
        if (d.total - (d.aleatoric + d.epistemic)).abs() > JENSEN_TOLERANCE {
            return Err(Error::InvariantViolation(format!(
                "total {} is not aleatoric {} + epistemic {}",
                d.total, d.aleatoric, d.epistemic
            )));
        }
        Ok(UncertaintyBreakdown {
            total: Nats::new(d.aleatoric + d.epistemic),
            aleatoric: Nats::new(d.aleatoric),
            epistemic: Nats::new(d.epistemic),
        })
    }
}

/// Running sums of per-step breakdowns along a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintySums {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

impl UncertaintySums {
    pub fn add(&mut self, step: &UncertaintyBreakdown) {
        self.total += step.total.get();
        self.aleatoric += step.aleatoric.get();
        self.epistemic += step.epistemic.get();
    }

    pub fn plus(mut self, step: &UncertaintyBreakdown) -> Self {
        self.add(step);
        self
    }

    pub fn get(&self, kind: UncertaintyKind) -> f64 {
        match kind {
            UncertaintyKind::Total => self.total,
            UncertaintyKind::Aleatoric => self.aleatoric,
            UncertaintyKind::Epistemic => self.epistemic,
        }
    }
}

/// Convenience wrapper over [`EnsembleDistribution::decompose`].
pub fn decompose(members: &[Categorical]) -> Result<UncertaintyBreakdown> {
    Ok(EnsembleDistribution::new(members.to_vec())?.decompose())
}
