//! The prudent commit rule.

use crate::error::ChainError;
use crate::store::BlockStore;
use crate::types::{Block, BlockId, VoteType};

/// Follows QC links from `b`, skipping every QC whose type includes `prud`, and
/// returns the first block certified by a non-prudent QC together with that
/// QC's type. Genesis certifies itself with a normal QC.
pub fn get_nonprud_qc_block(
    b: &Block,
    store: &BlockStore,
) -> Result<(BlockId, VoteType), ChainError> {
    let mut qc = b.qc();
    while qc.qtype().prud {
        qc = store.block(qc.block())?.qc();
    }
    Ok((qc.block(), qc.qtype()))
}

/// Returns the block `b` makes committable: the second non-prudent certified
/// block, provided the first one's QC is exactly normal.
pub fn commit_rule(b: &Block, store: &BlockStore) -> Result<Option<BlockId>, ChainError> {
    let (first, qtype) = get_nonprud_qc_block(b, store)?;
    let (second, _) = get_nonprud_qc_block(store.block(first)?, store)?;
    if qtype == VoteType::NORMAL && second != store.genesis() {
        Ok(Some(second))
    } else {
        Ok(None)
    }
}
