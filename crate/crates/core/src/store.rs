//! Per-replica block storage with ancestry queries.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::ChainError;
use crate::types::{Block, BlockId};

#[derive(Clone, Debug)]
pub struct BlockStore {
    blocks: BTreeMap<BlockId, Arc<Block>>,
    genesis: BlockId,
}

impl BlockStore {
    pub fn new(genesis: Arc<Block>) -> Self {
        let id = genesis.id();
        let mut blocks = BTreeMap::new();
        blocks.insert(id, genesis);
        BlockStore {
            blocks,
            genesis: id,
        }
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    /// Returns `false` if the block was already present.
    pub fn insert(&mut self, block: Arc<Block>) -> bool {
        let id = block.id();
        if self.blocks.contains_key(&id) {
            return false;
        }
        self.blocks.insert(id, block);
        true
    }

    pub fn get(&self, id: BlockId) -> Option<&Arc<Block>> {
        self.blocks.get(&id)
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn block(&self, id: BlockId) -> Result<&Arc<Block>, ChainError> {
        self.blocks.get(&id).ok_or(ChainError::UnknownBlock(id))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.blocks.values()
    }

    /// `a` lies on the parent chain of `b`; a block is its own ancestor.
    pub fn is_ancestor(&self, a: BlockId, b: BlockId) -> Result<bool, ChainError> {
        let target = self.block(a)?;
        let target_view = target.view();
        let mut cur = self.block(b)?;
        loop {
            if cur.id() == a {
                return Ok(true);
            }
            if cur.view() <= target_view || cur.id() == self.genesis {
                return Ok(false);
            }
            cur = self.block(cur.parent())?;
        }
    }

    /// Neither block is on the other's chain.
    pub fn conflicts(&self, a: BlockId, b: BlockId) -> Result<bool, ChainError> {
        Ok(!self.is_ancestor(a, b)? && !self.is_ancestor(b, a)?)
    }

    /// Blocks from `to` back to (excluding) `from`, newest first. Fails if `from`
    /// is not an ancestor of `to` or the walk leaves the store.
    pub fn path(&self, from: BlockId, to: BlockId) -> Result<Vec<Arc<Block>>, ChainError> {
        let stop = self.block(from)?.view();
        let mut out = Vec::new();
        let mut cur = self.block(to)?;
        while cur.id() != from {
            if cur.view() <= stop || cur.id() == self.genesis {
                return Err(ChainError::UnknownBlock(from));
            }
            out.push(cur.clone());
            cur = self.block(cur.parent())?;
        }
        Ok(out)
    }
}
