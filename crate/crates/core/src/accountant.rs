//! Sequential-composition budget ledger.
//!
//! Every mechanism invocation costs the same per-token ε. The ledger stores
//! only the integer invocation count; the total is derived on read so it
//! never drifts through repeated floating-point addition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Epsilon;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetLedger {
    eps: Epsilon,
    invocations: u64,
}

/// Serializable ledger summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub eps_per_token: f64,
    pub n: u64,
    pub total: f64,
}

impl BudgetLedger {
    pub fn new(eps: Epsilon) -> Self {
        Self {
            eps,
            invocations: 0,
        }
    }

    pub fn eps_per_invocation(&self) -> Epsilon {
        self.eps
    }

    pub fn invocations(&self) -> u64 {
        self.invocations
    }

    pub fn total(&self) -> f64 {
        self.eps.value() * self.invocations as f64
    }

    pub fn charge(&mut self, k: u64) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "charge count must be at least 1".into(),
            ));
        }
        self.invocations += k;
        Ok(())
    }

    pub(crate) fn charge_one(&mut self) {
        self.invocations += 1;
    }

    /// Combine ledgers that used the same per-token ε.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.eps != other.eps {
            return Err(Error::EpsilonMismatch(self.eps.value(), other.eps.value()));
        }
        Ok(Self {
            eps: self.eps,
            invocations: self.invocations + other.invocations,
        })
    }

    pub fn report(&self) -> BudgetReport {
        BudgetReport {
            eps_per_token: self.eps.value(),
            n: self.invocations,
            total: self.total(),
        }
    }
}
