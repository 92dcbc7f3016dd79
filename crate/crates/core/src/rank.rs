//! Block ranking: the base rule and the vote-count refinement used by the
//! boost-commit variant.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use core::cmp::Ordering;

use crate::types::{Block, BlockId, ReplicaId, TimeoutMsg};

/// `b1` strictly outranks `b2`: higher view, or same view and higher QC view.
pub fn rank(b1: &Block, b2: &Block) -> bool {
    b1.view() > b2.view() || (b1.view() == b2.view() && b1.qc().view() > b2.qc().view())
}

/// Orders blocks by `(view, qc.view)`; equal keys compare `Equal`.
pub fn rank_cmp(b1: &Block, b2: &Block) -> Ordering {
    (b1.view(), b1.qc().view()).cmp(&(b2.view(), b2.qc().view()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankOutcome {
    B1Higher,
    B2Higher,
    Tie,
}

/// Number of distinct senders in `tmo_set` whose high vote is `block`.
pub fn support(block: BlockId, tmo_set: &[Arc<TimeoutMsg>]) -> usize {
    tmo_set
        .iter()
        .filter(|m| m.high_vote.id() == block)
        .map(|m| m.sender)
        .collect::<BTreeSet<ReplicaId>>()
        .len()
}

/// Ranking with the vote-count tiebreak: when the base rule cannot separate two
/// distinct blocks, one backed by at least `f + 1` senders in `tmo_set` wins.
pub fn rank_cb(b1: &Block, b2: &Block, tmo_set: &[Arc<TimeoutMsg>], f: usize) -> RankOutcome {
    match rank_cmp(b1, b2) {
        Ordering::Greater => return RankOutcome::B1Higher,
        Ordering::Less => return RankOutcome::B2Higher,
        Ordering::Equal => {}
    }
    if b1.id() == b2.id() {
        return RankOutcome::Tie;
    }
    let threshold = f + 1;
    let s1 = support(b1.id(), tmo_set) >= threshold;
    let s2 = support(b2.id(), tmo_set) >= threshold;
    match (s1, s2) {
        (true, false) => RankOutcome::B1Higher,
        (false, true) => RankOutcome::B2Higher,
        _ => RankOutcome::Tie,
    }
}

/// How a replica compares two timeout-set candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    Plain,
    VoteCount { f: usize },
}

impl RankMode {
    /// Full comparison of two candidates within one timeout set.
    pub fn compare(self, b1: &Block, b2: &Block, tmo_set: &[Arc<TimeoutMsg>]) -> RankOutcome {
        match self {
            RankMode::Plain => match rank_cmp(b1, b2) {
                Ordering::Greater => RankOutcome::B1Higher,
                Ordering::Less => RankOutcome::B2Higher,
                Ordering::Equal => RankOutcome::Tie,
            },
            RankMode::VoteCount { f } => rank_cb(b1, b2, tmo_set, f),
        }
    }

    /// `b1` strictly outranks `b2` in the context of `tmo_set`.
    pub fn outranks(self, b1: &Block, b2: &Block, tmo_set: &[Arc<TimeoutMsg>]) -> bool {
        self.compare(b1, b2, tmo_set) == RankOutcome::B1Higher
    }

    /// Total order used to pick a parent: rank first, then lowest `BlockId` on
    /// ties. Returns `Greater` when `b1` is preferred.
    pub fn preference(self, b1: &Block, b2: &Block, tmo_set: &[Arc<TimeoutMsg>]) -> Ordering {
        match self.compare(b1, b2, tmo_set) {
            RankOutcome::B1Higher => Ordering::Greater,
            RankOutcome::B2Higher => Ordering::Less,
            RankOutcome::Tie => b2.id().cmp(&b1.id()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::Kit;
    use alloc::vec::Vec;

    #[test]
    fn higher_view_dominates() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b2 = k.by_votes(2, &g);
        let b3 = k.by_timeout_on(3, &g, &[]);
        assert!(rank(&b3, &b2));
        assert!(!rank(&b2, &b3));
    }

    #[test]
    fn qc_view_breaks_view_ties() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b2 = k.by_votes(2, &g);
        let b4 = k.by_votes(4, &b2);
        k.certify(&b4);
        let high = k.by_votes(5, &b4);
        let low = k.by_timeout_on(5, &b2, &[]);
        assert!(rank(&high, &low));
        assert!(!rank(&low, &high));
    }

    #[test]
    fn irreflexive() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b = k.by_votes(1, &g);
        assert!(!rank(&b, &b));
        assert!(!rank(&g, &g));
    }

    fn msgs_for(k: &mut Kit, view: u64, plan: &[(usize, &Arc<Block>)]) -> Vec<Arc<TimeoutMsg>> {
        plan.iter()
            .map(|(sender, hv)| k.timeout(*sender, view, hv))
            .collect()
    }

    #[test]
    fn cb_majority_support_wins() {
        // n = 7, f = 2: three senders for a, one for b.
        let mut k = Kit::new(2);
        let g = k.genesis();
        let a = k.by_votes_from(1, &g, 1, b"a");
        let b = k.by_votes_from(1, &g, 1, b"b");
        let set = msgs_for(&mut k, 1, &[(0, &a), (2, &a), (3, &a), (4, &b)]);
        assert_eq!(rank_cb(&a, &b, &set, 2), RankOutcome::B1Higher);
        assert_eq!(rank_cb(&b, &a, &set, 2), RankOutcome::B2Higher);
    }

    #[test]
    fn cb_distinct_views_fall_back() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let a = k.by_votes(1, &g);
        let b = k.by_votes(2, &a);
        let set = msgs_for(&mut k, 2, &[(0, &a), (1, &a), (2, &a)]);
        assert_eq!(rank_cb(&b, &a, &set, 1), RankOutcome::B1Higher);
    }

    /// Every assignment of the four senders of an `n = 4` committee to one of
    /// two equal-rank blocks (or neither) decides exactly when one block has at
    /// least two distinct backers.
    #[test]
    fn cb_tie_enumeration() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let a = k.by_votes_from(1, &g, 1, b"a");
        let b = k.by_votes_from(1, &g, 1, b"b");
        let other = k.by_votes_from(1, &g, 1, b"c");
        for code in 0..81u32 {
            let mut plan = Vec::new();
            let mut x = code;
            let (mut ca, mut cb) = (0, 0);
            for sender in 0..4 {
                let pick = x % 3;
                x /= 3;
                let hv = match pick {
                    0 => {
                        ca += 1;
                        &a
                    }
                    1 => {
                        cb += 1;
                        &b
                    }
                    _ => &other,
                };
                plan.push((sender, hv));
            }
            let set = msgs_for(&mut k, 1, &plan);
            let expected = match (ca >= 2, cb >= 2) {
                (true, false) => RankOutcome::B1Higher,
                (false, true) => RankOutcome::B2Higher,
                _ => RankOutcome::Tie,
            };
            assert_eq!(rank_cb(&a, &b, &set, 1), expected, "a={ca} b={cb}");
            if ca == 1 && cb == 1 {
                assert_eq!(rank_cb(&a, &b, &set, 1), RankOutcome::Tie);
            }
        }
    }

    #[test]
    fn preference_breaks_ties_by_lowest_id() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let a = k.by_votes_from(1, &g, 1, b"a");
        let b = k.by_votes_from(1, &g, 1, b"b");
        let (lo, hi) = if a.id() < b.id() { (&a, &b) } else { (&b, &a) };
        assert_eq!(RankMode::Plain.preference(lo, hi, &[]), Ordering::Greater);
    }

    mod props {
        use super::super::*;
        use crate::testkit::Kit;
        use proptest::prelude::*;

        fn key(view: u64, qc_view: u64) -> (u64, u64) {
            (view.max(qc_view + 1), qc_view)
        }

        proptest! {
            #[test]
            fn rank_is_a_strict_weak_order(
                a in (1u64..12, 0u64..12),
                b in (1u64..12, 0u64..12),
                c in (1u64..12, 0u64..12),
            ) {
                let mut k = Kit::new(1);
                let blocks: alloc::vec::Vec<_> = [a, b, c]
                    .into_iter()
                    .map(|(v, q)| {
                        let (v, q) = key(v, q);
                        k.synthetic(v, q)
                    })
                    .collect();
                let (x, y, z) = (&blocks[0], &blocks[1], &blocks[2]);
                prop_assert!(!(rank(x, y) && rank(y, x)));
                if rank(x, y) && rank(y, z) {
                    prop_assert!(rank(x, z));
                }
                // incomparability is transitive
                let inc = |p: &Block, q: &Block| !rank(p, q) && !rank(q, p);
                if inc(x, y) && inc(y, z) {
                    prop_assert!(inc(x, z));
                }
            }
        }
    }
}
