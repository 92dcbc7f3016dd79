//! Commit and validation rules of the comparison protocols: Fast-HotStuff,
//! Chained HotStuff, and BeeGees validation without traceback.
//!
//! The baselines share the replica state machine with the prudent protocol and
//! differ only in the rules defined here. They are modeled to the fidelity the
//! latency comparison needs: a happy path, a timeout view change that extends the
//! highest known QC, and the consecutive-view commit rules.

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, ValidationError};
use crate::store::BlockStore;
use crate::types::{Block, BlockId, Origin};
use crate::validation::ValidationContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    FastHotStuff,
    ChainedHotStuff,
    NaiveBeeGees,
}

/// `child` directly extends `parent` one view later.
fn direct_successor(child: &Block, parent: &Block) -> bool {
    child.parent() == parent.id() && child.view() == parent.view().next()
}

/// The certified blocks reachable from `b` through QC links, newest first.
fn certified_chain<'a>(
    b: &'a Block,
    store: &'a BlockStore,
    depth: usize,
) -> Result<alloc::vec::Vec<&'a alloc::sync::Arc<Block>>, ChainError> {
    let mut out = alloc::vec::Vec::with_capacity(depth);
    let mut next = b.qc_block();
    for _ in 0..depth {
        let blk = store.block(next)?;
        let at_genesis = blk.is_genesis();
        next = blk.qc_block();
        out.push(blk);
        if at_genesis {
            break;
        }
    }
    Ok(out)
}

/// Two-chain rule: the first and second certified blocks on `b`'s chain are
/// direct successors; commit the second. Genesis is committed by definition and
/// never returned.
pub fn fhs_commit_rule(b: &Block, store: &BlockStore) -> Result<Option<BlockId>, ChainError> {
    let chain = certified_chain(b, store, 2)?;
    match chain.as_slice() {
        [first, second] if !second.is_genesis() && direct_successor(first, second) => {
            Ok(Some(second.id()))
        }
        _ => Ok(None),
    }
}

/// Three-chain rule: three certified blocks in consecutive views; commit the
/// oldest.
pub fn chs_commit_rule(b: &Block, store: &BlockStore) -> Result<Option<BlockId>, ChainError> {
    let chain = certified_chain(b, store, 3)?;
    match chain.as_slice() {
        [first, second, third]
            if !third.is_genesis()
                && direct_successor(first, second)
                && direct_successor(second, third) =>
        {
            Ok(Some(third.id()))
        }
        _ => Ok(None),
    }
}

/// The block a Chained HotStuff replica locks on after seeing `b`: the block
/// certified by the QC that `b`'s certified block carries.
pub fn chs_lock_candidate(b: &Block, store: &BlockStore) -> Result<BlockId, ChainError> {
    Ok(store.block(b.qc_block())?.qc_block())
}

/// Validity as judged by a BeeGees replica that does not trace back: only the
/// self-contained rules.
pub fn naive_beegees_validate(
    b: &Block,
    store: &BlockStore,
    ctx: &ValidationContext,
) -> Result<bool, ValidationError> {
    ctx.explicit_valid(b, store)
}

/// BeeGees commit rule: commit the second certified block when the first and
/// second are consecutive; otherwise walk the blocks after the second certified
/// block up to the first, and suspend the commit if any of their timeout sets
/// reports a block in the parent's view that conflicts with the second.
pub fn naive_beegees_commit_rule(
    b: &Block,
    store: &BlockStore,
) -> Result<Option<BlockId>, ChainError> {
    let chain = certified_chain(b, store, 2)?;
    let [first, second] = chain.as_slice() else {
        return Ok(None);
    };
    if second.is_genesis() {
        return Ok(None);
    }
    if first.view() == second.view().next() {
        return Ok(Some(second.id()));
    }
    let mut cur = (*first).clone();
    while cur.id() != second.id() {
        if cur.is_genesis() {
            return Ok(None);
        }
        let parent = store.block(cur.parent())?.clone();
        if let Some(set) = cur.tmo_set() {
            for msg in set {
                let hv = &msg.high_vote;
                if hv.view() == parent.view() && conflicts(hv, second.id(), store)? {
                    return Ok(None);
                }
            }
        }
        cur = parent;
    }
    Ok(Some(second.id()))
}

fn conflicts(hv: &Block, other: BlockId, store: &BlockStore) -> Result<bool, ChainError> {
    if hv.id() == other {
        return Ok(false);
    }
    if !hv.is_genesis() && store.is_ancestor(other, hv.parent())? {
        return Ok(false);
    }
    if store.contains(hv.id()) {
        return Ok(!store.is_ancestor(hv.id(), other)?);
    }
    Ok(true)
}

/// Self-contained validity for the HotStuff baselines. Vote-justified blocks
/// must extend the QC of the previous view; timeout-justified blocks must extend
/// a QC at least as high as any reported in the timeout set.
pub fn hotstuff_valid(
    b: &Block,
    store: &BlockStore,
    ctx: &ValidationContext,
) -> Result<bool, ValidationError> {
    if b.is_genesis() {
        return Ok(b.id() == store.genesis());
    }
    if b.proposer() != ctx.committee.leader(b.view()) || !b.verify_signature(&ctx.ring) {
        return Ok(false);
    }
    let qc = b.qc();
    if !qc.verify(&ctx.committee, &ctx.ring, store.genesis()) {
        return Ok(false);
    }
    let qc_block = store.block(qc.block())?;
    if qc_block.view() != qc.view() || b.parent() != qc.block() || qc.view() >= b.view() {
        return Ok(false);
    }
    match b.origin() {
        Origin::ByVotes => Ok(qc.view().next() == b.view()),
        Origin::ByTimeout => {
            let (Some(tc), Some(set)) = (b.tc(), b.tmo_set()) else {
                return Ok(false);
            };
            if tc.view().next() != b.view() || !tc.verify(&ctx.committee, &ctx.ring) {
                return Ok(false);
            }
            let highest = set.iter().map(|m| m.high_vote.qc().view()).max();
            Ok(highest.is_none_or(|h| qc.view() >= h))
        }
    }
}
