//! Stop faults and byzantine assignments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::rng::unit_hash;
use crate::types::{Committee, ReplicaId, View};

/// Behavior of a byzantine replica. Each script wraps an otherwise honest
/// replica of the protocol under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    /// As leader, sends two different blocks to two disjoint halves.
    Equivocate,
    /// In its first leader slot at or after `from`, proposes a block that
    /// conflicts with its last committed block, times out on it, then goes
    /// silent for the rest of the run.
    InvalidThenHalt { from: View },
    /// Adopts any explicitly invalid block proposed by a colluder, reports it
    /// as its high vote and, as leader after a timeout, extends it.
    Extender,
    /// Never proposes, so every view it leads ends in a timeout.
    HollowInducer,
    /// Sends nothing at all.
    Silent,
}

impl Script {
    pub fn name(self) -> &'static str {
        match self {
            Script::Equivocate => "equivocate",
            Script::InvalidThenHalt { .. } => "invalid_then_halt",
            Script::Extender => "extender",
            Script::HollowInducer => "hollow_inducer",
            Script::Silent => "silent",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Probability that a leader slot is skipped.
    pub stop_prob: f64,
    /// Random stops apply only to views in this inclusive range, if set.
    pub stop_window: Option<(View, View)>,
    /// Leader slots that are always skipped.
    pub stop_views: BTreeSet<View>,
    pub byzantine: BTreeMap<ReplicaId, Script>,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    pub fn with_stop_prob(stop_prob: f64) -> Self {
        FaultPlan {
            stop_prob,
            ..FaultPlan::default()
        }
    }

    pub fn validate(&self, committee: &Committee) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.stop_prob) {
            return Err("stop_prob must lie in [0, 1]");
        }
        if self.byzantine.len() > committee.f() {
            return Err("more byzantine replicas than the committee tolerates");
        }
        if self.byzantine.keys().any(|r| !committee.contains(*r)) {
            return Err("byzantine replica outside the committee");
        }
        Ok(())
    }

    /// Whether the leader of `view` skips its proposal. Decided by hashing
    /// `(seed, view)`, so the schedule does not depend on event order.
    pub fn stopped(&self, seed: u64, view: View) -> bool {
        if self.stop_views.contains(&view) {
            return true;
        }
        if let Some((lo, hi)) = self.stop_window {
            if view < lo || view > hi {
                return false;
            }
        }
        self.stop_prob > 0.0 && unit_hash(seed, "stop", view.0) < self.stop_prob
    }

    pub fn is_correct(&self, replica: ReplicaId) -> bool {
        !self.byzantine.contains_key(&replica)
    }

    pub fn correct(&self, committee: &Committee) -> Vec<ReplicaId> {
        committee.members().filter(|r| self.is_correct(*r)).collect()
    }
}
