//! Block validation: explicit (self-contained) validity and recursive traceback
//! with equivocation and prudence detection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::KeyRing;
use crate::error::{ChainError, ValidationError};
use crate::rank::{RankMode, RankOutcome};
use crate::store::BlockStore;
use crate::types::{Block, BlockId, Committee, Origin, ReplicaId, View, VoteType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Normal,
    Eqvc,
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationResult {
    pub verdict: Verdict,
    /// The validated block sits exactly at the prudence degree.
    pub prud: bool,
}

impl ValidationResult {
    pub const NORMAL: ValidationResult = ValidationResult {
        verdict: Verdict::Normal,
        prud: false,
    };
    pub const INVALID: ValidationResult = ValidationResult {
        verdict: Verdict::Invalid,
        prud: false,
    };

    pub fn is_valid(&self) -> bool {
        self.verdict != Verdict::Invalid
    }

    /// The vote type a replica casts for a block with this result.
    pub fn vote_type(&self) -> Option<VoteType> {
        match self.verdict {
            Verdict::Invalid => None,
            Verdict::Normal => Some(VoteType {
                prud: self.prud,
                eqvc: false,
            }),
            Verdict::Eqvc => Some(VoteType {
                prud: self.prud,
                eqvc: true,
            }),
        }
    }
}

/// Everything validation needs beyond the block store.
#[derive(Clone, Debug)]
pub struct ValidationContext {
    pub committee: Committee,
    pub ring: KeyRing,
    pub rank_mode: RankMode,
    /// Prudence degree: the longest permitted run of timeout blocks.
    pub pd: u32,
}

/// Why a block failed the self-contained checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Defect {
    /// A certificate does not verify (bad signature, short quorum, mixed contents).
    Cert(&'static str),
    /// A structural rule is violated.
    Rule(&'static str),
}

impl ValidationContext {
    /// Runs every self-contained rule on `b`. `Ok(None)` means explicitly valid.
    pub fn explicit_check(
        &self,
        b: &Block,
        store: &BlockStore,
    ) -> Result<Option<Defect>, ValidationError> {
        if b.is_genesis() {
            return Ok((b.id() != store.genesis()).then_some(Defect::Rule("foreign genesis")));
        }
        if b.view() == View::GENESIS {
            return Ok(Some(Defect::Rule("non-genesis block at view 0")));
        }
        if b.proposer() != self.committee.leader(b.view()) {
            return Ok(Some(Defect::Rule("proposer is not the view leader")));
        }
        if !b.verify_signature(&self.ring) {
            return Ok(Some(Defect::Rule("bad proposer signature")));
        }
        let qc = b.qc();
        if !qc.verify(&self.committee, &self.ring, store.genesis()) {
            return Ok(Some(Defect::Cert("quorum certificate does not verify")));
        }
        let qc_block = store
            .get(qc.block())
            .ok_or(ValidationError::UnknownBlock(qc.block()))?;
        if qc_block.view() != qc.view() || qc.view() >= b.view() {
            return Ok(Some(Defect::Rule("QC view inconsistent with certified block")));
        }
        let parent = store
            .get(b.parent())
            .ok_or(ValidationError::UnknownBlock(b.parent()))?;
        if parent.view() >= b.view() {
            return Ok(Some(Defect::Rule("parent view not below block view")));
        }

        match b.origin() {
            Origin::ByVotes => {
                if b.parent() != qc.block() {
                    return Ok(Some(Defect::Rule("QC does not certify the parent")));
                }
                if qc.view().next() != b.view() {
                    return Ok(Some(Defect::Rule("QC is not from the previous view")));
                }
                if b.cnt_tmo() != 0 {
                    return Ok(Some(Defect::Rule("vote-justified block with nonzero counter")));
                }
                Ok(None)
            }
            Origin::ByTimeout => self.explicit_timeout_rules(b, parent, store),
        }
    }

    fn explicit_timeout_rules(
        &self,
        b: &Block,
        parent: &Block,
        store: &BlockStore,
    ) -> Result<Option<Defect>, ValidationError> {
        let (Some(tc), Some(tmo_set)) = (b.tc(), b.tmo_set()) else {
            return Ok(Some(Defect::Rule("timeout block missing TC or timeout set")));
        };
        if !tc.verify(&self.committee, &self.ring) {
            return Ok(Some(Defect::Cert("timeout certificate does not verify")));
        }
        if tc.view().next() != b.view() {
            return Ok(Some(Defect::Rule("TC is not from the previous view")));
        }
        let senders: BTreeSet<ReplicaId> = tmo_set.iter().map(|m| m.sender).collect();
        if senders.len() < self.committee.quorum() || senders.len() != tmo_set.len() {
            return Ok(Some(Defect::Rule("timeout set lacks n - f distinct senders")));
        }
        if tmo_set
            .iter()
            .any(|m| m.view != tc.view() || !self.committee.contains(m.sender))
        {
            return Ok(Some(Defect::Rule("timeout set mixes views")));
        }
        if tmo_set.iter().any(|m| !m.verify(&self.ring)) {
            return Ok(Some(Defect::Cert("timeout message does not verify")));
        }
        let mut ours: Vec<_> = tmo_set.iter().map(|m| (m.sender, m.sig.tag)).collect();
        let mut theirs: Vec<_> = tc.msgs().iter().map(|m| (m.sender, m.sig.tag)).collect();
        ours.sort();
        theirs.sort();
        if ours != theirs {
            return Ok(Some(Defect::Rule("timeout set inconsistent with TC")));
        }
        if !store.is_ancestor(b.qc_block(), parent.id())? {
            return Ok(Some(Defect::Rule("QC block is not an ancestor")));
        }
        if !tmo_set.iter().any(|m| m.high_vote.id() == parent.id()) {
            return Ok(Some(Defect::Rule("parent absent from timeout set")));
        }
        if tmo_set
            .iter()
            .any(|m| self.rank_mode.outranks(&m.high_vote, parent, tmo_set))
        {
            return Ok(Some(Defect::Rule("timeout set holds a higher-ranked block")));
        }
        if b.cnt_tmo() != parent.cnt_tmo() + 1 {
            return Ok(Some(Defect::Rule("counter is not parent counter + 1")));
        }
        Ok(None)
    }

    pub fn explicit_valid(&self, b: &Block, store: &BlockStore) -> Result<bool, ValidationError> {
        Ok(self.explicit_check(b, store)?.is_none())
    }

    /// Equal-rank timeout-set entries other than the parent, deduplicated.
    pub fn equal_rank_candidates(&self, b: &Block, parent: &Block) -> Vec<Arc<Block>> {
        let Some(tmo_set) = b.tmo_set() else {
            return Vec::new();
        };
        let mut seen = BTreeSet::new();
        tmo_set
            .iter()
            .filter(|m| m.high_vote.id() != parent.id())
            .filter(|m| self.rank_mode.compare(&m.high_vote, parent, tmo_set) == RankOutcome::Tie)
            .filter(|m| seen.insert(m.high_vote.id()))
            .map(|m| m.high_vote.clone())
            .collect()
    }
}

/// Eqvc iff some candidate conflicts with `qc_block` (neither is an ancestor of
/// the other). A candidate need not be in the store, but its parent chain must.
pub fn test_equivocation(
    candidates: &[Arc<Block>],
    qc_block: BlockId,
    store: &BlockStore,
) -> Result<Verdict, ChainError> {
    for cand in candidates {
        if conflicts_with(cand, qc_block, store)? {
            return Ok(Verdict::Eqvc);
        }
    }
    Ok(Verdict::Normal)
}

fn conflicts_with(cand: &Block, other: BlockId, store: &BlockStore) -> Result<bool, ChainError> {
    if cand.id() == other {
        return Ok(false);
    }
    let other_block = store.block(other)?;
    let below = if cand.is_genesis() {
        false
    } else {
        store.is_ancestor(other, cand.parent())?
    };
    if below {
        return Ok(false);
    }
    if store.contains(cand.id()) {
        return Ok(!store.is_ancestor(cand.id(), other_block.id())?);
    }
    // A block the store has never seen cannot be an ancestor of a stored one.
    Ok(true)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationStats {
    /// Recursive frames evaluated (cache misses).
    pub frames: u64,
    /// Deepest recursion reached, counting the top-level call as 1.
    pub max_depth: usize,
    pub cache_hits: u64,
}

/// A replica's validator: the context plus a verdict cache.
#[derive(Clone, Debug)]
pub struct Validator {
    ctx: ValidationContext,
    cache: Option<BTreeMap<BlockId, ValidationResult>>,
    stats: ValidationStats,
}

impl Validator {
    pub fn new(ctx: ValidationContext) -> Self {
        Validator {
            ctx,
            cache: Some(BTreeMap::new()),
            stats: ValidationStats::default(),
        }
    }

    /// A validator that recomputes every verdict.
    pub fn uncached(ctx: ValidationContext) -> Self {
        Validator {
            ctx,
            cache: None,
            stats: ValidationStats::default(),
        }
    }

    pub fn ctx(&self) -> &ValidationContext {
        &self.ctx
    }

    pub fn stats(&self) -> ValidationStats {
        self.stats
    }

    pub fn cached(&self, id: BlockId) -> Option<ValidationResult> {
        self.cache.as_ref()?.get(&id).copied()
    }

    pub fn explicit_valid(&self, b: &Block, store: &BlockStore) -> Result<bool, ValidationError> {
        self.ctx.explicit_valid(b, store)
    }

    /// Traceback validation of `b` back to the nearest vote-justified block.
    pub fn valid_chain(
        &mut self,
        b: &Block,
        store: &BlockStore,
    ) -> Result<ValidationResult, ValidationError> {
        self.chain_at(b, store, 1)
    }

    fn chain_at(
        &mut self,
        b: &Block,
        store: &BlockStore,
        depth: usize,
    ) -> Result<ValidationResult, ValidationError> {
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if let Some(hit) = self.cached(b.id()) {
            self.stats.cache_hits += 1;
            return Ok(hit);
        }
        self.stats.frames += 1;
        let result = self.evaluate(b, store, depth)?;
        if let Some(cache) = self.cache.as_mut() {
            cache.insert(b.id(), result);
        }
        Ok(result)
    }

    fn evaluate(
        &mut self,
        b: &Block,
        store: &BlockStore,
        depth: usize,
    ) -> Result<ValidationResult, ValidationError> {
        match self.ctx.explicit_check(b, store)? {
            Some(Defect::Cert(reason)) => {
                return Err(ValidationError::MalformedCert {
                    block: b.id(),
                    reason,
                })
            }
            Some(Defect::Rule(_)) => return Ok(ValidationResult::INVALID),
            None => {}
        }
        if b.origin() == Origin::ByVotes {
            return Ok(ValidationResult::NORMAL);
        }
        if b.cnt_tmo() > self.ctx.pd {
            return Ok(ValidationResult::INVALID);
        }
        let parent = store.block(b.parent())?.clone();
        let upstream = self.chain_at(&parent, store, depth + 1)?;
        let verdict = match upstream.verdict {
            Verdict::Invalid => return Ok(ValidationResult::INVALID),
            Verdict::Eqvc => Verdict::Eqvc,
            Verdict::Normal => {
                let candidates = self.ctx.equal_rank_candidates(b, &parent);
                test_equivocation(&candidates, b.qc_block(), store)?
            }
        };
        Ok(ValidationResult {
            verdict,
            prud: b.cnt_tmo() == self.ctx.pd,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::Kit;
    use alloc::vec;

    fn ctx(k: &Kit, pd: u32) -> ValidationContext {
        ValidationContext {
            committee: k.committee,
            ring: k.ring.clone(),
            rank_mode: RankMode::Plain,
            pd,
        }
    }

    #[test]
    fn by_votes_happy_path() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let b2 = k.by_votes(2, &b1);
        let mut v = Validator::new(ctx(&k, 3));
        assert!(v.explicit_valid(&b2, &k.store).unwrap());
        assert_eq!(v.valid_chain(&b2, &k.store).unwrap(), ValidationResult::NORMAL);
    }

    #[test]
    fn outranked_parent_is_explicitly_invalid() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let b2 = k.by_votes(2, &b1);
        // parent b1, but sender 0 reports the higher b2
        let b4 = k.by_timeout_on(4, &b1, &[(0, &b2)]);
        let v = Validator::new(ctx(&k, 3));
        assert!(!v.explicit_valid(&b4, &k.store).unwrap());
    }

    #[test]
    fn short_timeout_set_is_explicitly_invalid() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let good = k.by_timeout_on(3, &b1, &[]);
        let mut contents = good.contents().clone();
        contents.tmo_set.as_mut().unwrap().pop();
        let short = k.seal(contents);
        let v = Validator::new(ctx(&k, 3));
        assert!(v.explicit_valid(&good, &k.store).unwrap());
        assert!(!v.explicit_valid(&short, &k.store).unwrap());
    }

    #[test]
    fn unknown_parent_is_an_error() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let b2 = k.by_votes(2, &b1);
        let bare = BlockStore::new(g);
        let v = Validator::new(ctx(&k, 3));
        assert_eq!(
            v.explicit_valid(&b2, &bare),
            Err(ValidationError::UnknownBlock(b1.id()))
        );
    }

    #[test]
    fn counter_at_pd_is_prudent() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let t3 = k.by_timeout_on(3, &b1, &[]);
        let t4 = k.by_timeout_on(4, &t3, &[]);
        let mut v = Validator::new(ctx(&k, 2));
        assert_eq!(
            v.valid_chain(&t4, &k.store).unwrap(),
            ValidationResult {
                verdict: Verdict::Normal,
                prud: true
            }
        );
        assert_eq!(v.stats().max_depth, 3);
    }

    #[test]
    fn counter_above_pd_is_invalid() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let t3 = k.by_timeout_on(3, &b1, &[]);
        let t4 = k.by_timeout_on(4, &t3, &[]);
        let mut v = Validator::new(ctx(&k, 1));
        assert_eq!(v.valid_chain(&t4, &k.store).unwrap(), ValidationResult::INVALID);
    }

    #[test]
    fn invalid_ancestor_poisons_descendant() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let b2 = k.by_votes(2, &b1);
        let b3 = k.by_votes(3, &b2);
        let b4 = k.by_votes(4, &b3);
        // view 5: leader proposes on b1 while carrying QC_1; the QC is two views stale
        let qc1 = k.qcs[&b1.id()].clone();
        let _ = &b2;
        let b5 = k.seal(crate::types::BlockContents::by_votes(
            k.committee.leader(View(5)),
            View(5),
            qc1,
            vec![5],
        ));
        let b6 = k.by_timeout_on(6, &b5, &[]);
        let mut v = Validator::new(ctx(&k, 3));
        assert!(!v.explicit_valid(&b5, &k.store).unwrap());
        assert!(v.explicit_valid(&b6, &k.store).unwrap());
        assert_eq!(v.valid_chain(&b6, &k.store).unwrap(), ValidationResult::INVALID);
        let _ = b4;
    }

    #[test]
    fn sibling_of_qc_block_is_equivocation() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let left = k.by_votes_from(2, &b1, 2, b"left");
        let right = k.by_votes_from(2, &b1, 2, b"right");
        assert!(k.store.conflicts(left.id(), right.id()).unwrap());
        assert_eq!(
            test_equivocation(&[right.clone()], left.id(), &k.store).unwrap(),
            Verdict::Eqvc
        );
        assert_eq!(test_equivocation(&[], left.id(), &k.store).unwrap(), Verdict::Normal);
        let child = k.by_votes(3, &left);
        assert_eq!(
            test_equivocation(&[child], left.id(), &k.store).unwrap(),
            Verdict::Normal
        );
    }

    #[test]
    fn equal_rank_conflict_flags_eqvc() {
        // Two same-view competing blocks, each certified with a forged quorum,
        // and children of each that tie on rank.
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let left = k.by_votes_from(2, &b1, 2, b"left");
        let right = k.by_votes_from(2, &b1, 2, b"right");
        k.certify(&left);
        k.certify(&right);
        let a = k.by_votes_from(3, &left, 3, b"a");
        let a2 = k.by_votes_from(3, &right, 3, b"a2");
        let b = k.by_timeout_on(4, &a, &[(1, &a2)]);
        let mut v = Validator::new(ctx(&k, 3));
        assert!(v.explicit_valid(&b, &k.store).unwrap());
        assert_eq!(
            v.valid_chain(&b, &k.store).unwrap(),
            ValidationResult {
                verdict: Verdict::Eqvc,
                prud: false
            }
        );
        let clean = k.by_timeout_on(4, &a, &[]);
        assert_eq!(v.valid_chain(&clean, &k.store).unwrap(), ValidationResult::NORMAL);
    }

    #[test]
    fn cached_and_uncached_agree() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let t3 = k.by_timeout_on(3, &b1, &[]);
        let t4 = k.by_timeout_on(4, &t3, &[]);
        let mut cached = Validator::new(ctx(&k, 3));
        let mut plain = Validator::uncached(ctx(&k, 3));
        for b in [&t3, &t4, &t4, &t3] {
            assert_eq!(
                cached.valid_chain(b, &k.store).unwrap(),
                plain.valid_chain(b, &k.store).unwrap()
            );
        }
        assert!(cached.stats().cache_hits >= 2);
    }

    #[test]
    fn tampered_qc_is_malformed() {
        let mut k = Kit::new(1);
        let g = k.genesis();
        let b1 = k.by_votes(1, &g);
        let mut votes: alloc::vec::Vec<_> = k.certify(&b1).votes().to_vec();
        votes[0].sig.tag[0] ^= 1;
        let qc = Arc::new(crate::types::QuorumCert::new(&k.committee, votes).unwrap());
        let b2 = k.seal(crate::types::BlockContents::by_votes(
            k.committee.leader(View(2)),
            View(2),
            qc,
            vec![],
        ));
        let mut v = Validator::new(ctx(&k, 3));
        assert!(matches!(
            v.valid_chain(&b2, &k.store),
            Err(ValidationError::MalformedCert { .. })
        ));
    }
}
