//! Hand-built chains for unit tests.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::crypto::{generate_keys, KeyPair, KeyRing};
use crate::store::BlockStore;
use crate::types::{
    Block, BlockContents, BlockId, Committee, QuorumCert, ReplicaId, TimeoutCert, TimeoutMsg,
    View, Vote, VoteType,
};

pub struct Kit {
    pub committee: Committee,
    pub ring: KeyRing,
    pub keys: Vec<KeyPair>,
    pub store: BlockStore,
    pub qcs: BTreeMap<BlockId, Arc<QuorumCert>>,
    genesis: Arc<Block>,
}

impl Kit {
    pub fn new(f: usize) -> Self {
        let committee = Committee::new(f);
        let (ring, keys) = generate_keys(committee.n(), 42);
        let genesis = Block::genesis();
        let mut qcs = BTreeMap::new();
        qcs.insert(genesis.id(), genesis.qc().clone());
        Kit {
            committee,
            ring,
            keys,
            store: BlockStore::new(genesis.clone()),
            qcs,
            genesis,
        }
    }

    pub fn genesis(&self) -> Arc<Block> {
        self.genesis.clone()
    }

    pub fn qc_over(&self, view: u64, block: BlockId, vtype: VoteType) -> Arc<QuorumCert> {
        let votes = (0..self.committee.quorum())
            .map(|i| Vote::new(&self.keys[i], &self.ring, View(view), block, vtype))
            .collect();
        Arc::new(QuorumCert::new(&self.committee, votes).unwrap())
    }

    pub fn certify_as(&mut self, block: &Arc<Block>, vtype: VoteType) -> Arc<QuorumCert> {
        let qc = self.qc_over(block.view().0, block.id(), vtype);
        self.qcs.insert(block.id(), qc.clone());
        qc
    }

    pub fn certify(&mut self, block: &Arc<Block>) -> Arc<QuorumCert> {
        self.certify_as(block, VoteType::NORMAL)
    }

    fn qc_of(&mut self, block: &Arc<Block>) -> Arc<QuorumCert> {
        match self.qcs.get(&block.id()) {
            Some(qc) => qc.clone(),
            None => self.certify(block),
        }
    }

    pub fn seal(&mut self, contents: BlockContents) -> Arc<Block> {
        let key = &self.keys[contents.proposer.index()];
        let block = Arc::new(Block::new(contents, key, &self.ring));
        self.store.insert(block.clone());
        block
    }

    pub fn by_votes_from(
        &mut self,
        view: u64,
        parent: &Arc<Block>,
        proposer: u32,
        payload: &[u8],
    ) -> Arc<Block> {
        let qc = self.qc_of(parent);
        self.seal(BlockContents::by_votes(
            ReplicaId(proposer),
            View(view),
            qc,
            payload.to_vec(),
        ))
    }

    /// A block justified by a (normal, unless already certified) QC over `parent`.
    pub fn by_votes(&mut self, view: u64, parent: &Arc<Block>) -> Arc<Block> {
        let leader = self.committee.leader(View(view)).0;
        self.by_votes_from(view, parent, leader, &[])
    }

    pub fn timeout(&self, sender: usize, view: u64, high_vote: &Arc<Block>) -> Arc<TimeoutMsg> {
        Arc::new(TimeoutMsg::new(
            &self.keys[sender],
            &self.ring,
            View(view),
            high_vote.clone(),
        ))
    }

    /// Timeout messages for `view` from the first `quorum` senders: listed
    /// overrides first, the rest carrying `default_hv`.
    pub fn tmo_set(
        &self,
        view: u64,
        default_hv: &Arc<Block>,
        overrides: &[(usize, &Arc<Block>)],
    ) -> Vec<Arc<TimeoutMsg>> {
        (0..self.committee.quorum())
            .map(|sender| {
                let hv = overrides
                    .iter()
                    .find(|(s, _)| *s == sender)
                    .map(|(_, b)| *b)
                    .unwrap_or(default_hv);
                self.timeout(sender, view, hv)
            })
            .collect()
    }

    /// A well-formed timeout block on `parent`, whose timeout set carries
    /// `parent` except for the listed overrides.
    pub fn by_timeout_on(
        &mut self,
        view: u64,
        parent: &Arc<Block>,
        overrides: &[(usize, &Arc<Block>)],
    ) -> Arc<Block> {
        let msgs = self.tmo_set(view - 1, parent, overrides);
        let cnt = parent.cnt_tmo() + 1;
        self.raw_timeout(view, parent.id(), parent.qc().clone(), cnt, msgs)
    }

    pub fn raw_timeout(
        &mut self,
        view: u64,
        parent: BlockId,
        qc: Arc<QuorumCert>,
        cnt_tmo: u32,
        msgs: Vec<Arc<TimeoutMsg>>,
    ) -> Arc<Block> {
        let tc = Arc::new(TimeoutCert::new(&self.committee, msgs).unwrap());
        let leader = self.committee.leader(View(view));
        self.seal(BlockContents::by_timeout(
            leader,
            View(view),
            parent,
            qc,
            tc,
            cnt_tmo,
            Vec::new(),
        ))
    }

    /// A block at `view` whose QC claims `qc_view`, over an unrelated digest.
    /// Only meaningful for ranking.
    pub fn synthetic(&mut self, view: u64, qc_view: u64) -> Arc<Block> {
        let fake = BlockId(crate::crypto::digest(&qc_view.to_be_bytes()));
        let qc = self.qc_over(qc_view, fake, VoteType::NORMAL);
        let proposer = self.committee.leader(View(view));
        let key = &self.keys[proposer.index()];
        Arc::new(Block::new(
            BlockContents::by_votes(proposer, View(view), qc, Vec::new()),
            key,
            &self.ring,
        ))
    }
}
