//! Protocol data structures: identities, votes, certificates and blocks.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;
use crate::crypto::{digest, KeyPair, KeyRing, Signature};
use crate::error::CertError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct View(pub u64);

impl View {
    pub const GENESIS: View = View(0);

    pub fn next(self) -> View {
        View(self.0 + 1)
    }

    /// The preceding view; saturates at genesis.
    pub fn prev(self) -> View {
        View(self.0.saturating_sub(1))
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Committee parameters: `n = 3f + 1` replicas, round-robin leaders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    n: usize,
    f: usize,
}

impl Committee {
    pub fn new(f: usize) -> Self {
        Committee { n: 3 * f + 1, f }
    }

    /// Builds a committee from `n`, rejecting sizes that are not `3f + 1`.
    pub fn from_n(n: usize) -> Option<Self> {
        (n >= 1 && (n - 1) % 3 == 0).then(|| Committee::new((n - 1) / 3))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    pub fn leader(&self, view: View) -> ReplicaId {
        ReplicaId((view.0 % self.n as u64) as u32)
    }

    pub fn contains(&self, replica: ReplicaId) -> bool {
        replica.index() < self.n
    }

    pub fn members(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.n as u32).map(ReplicaId)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub [u8; 32]);

impl BlockId {
    pub const ZERO: BlockId = BlockId([0; 32]);
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for byte in &self.0 {
            write!(f, "{byte:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for byte in &self.0[..4] {
            write!(f, "{byte:02x}")?;
        }
        Ok(())
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let text: &str = Deserialize::deserialize(deserializer)?;
        let bytes = text.as_bytes();
        if bytes.len() != 64 {
            return Err(D::Error::custom("block id must be 64 hex characters"));
        }
        let nibble = |c: u8| -> Result<u8, D::Error> {
            (c as char)
                .to_digit(16)
                .map(|d| d as u8)
                .ok_or_else(|| D::Error::custom("invalid hex digit"))
        };
        let mut out = [0u8; 32];
        for (i, pair) in bytes.chunks(2).enumerate() {
            out[i] = nibble(pair[0])? << 4 | nibble(pair[1])?;
        }
        Ok(BlockId(out))
    }
}

/// One of the four vote/QC types: normal, prud, eqvc, or prud+eqvc.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct VoteType {
    pub prud: bool,
    pub eqvc: bool,
}

impl VoteType {
    pub const NORMAL: VoteType = VoteType {
        prud: false,
        eqvc: false,
    };
    pub const PRUD: VoteType = VoteType {
        prud: true,
        eqvc: false,
    };
    pub const EQVC: VoteType = VoteType {
        prud: false,
        eqvc: true,
    };
    pub const PRUD_EQVC: VoteType = VoteType {
        prud: true,
        eqvc: true,
    };
    pub const ALL: [VoteType; 4] = [
        VoteType::NORMAL,
        VoteType::PRUD,
        VoteType::EQVC,
        VoteType::PRUD_EQVC,
    ];

    pub fn is_normal(self) -> bool {
        self == VoteType::NORMAL
    }

    pub fn code(self) -> u8 {
        (self.prud as u8) | (self.eqvc as u8) << 1
    }

    pub fn name(self) -> &'static str {
        match (self.prud, self.eqvc) {
            (false, false) => "normal",
            (true, false) => "prud",
            (false, true) => "eqvc",
            (true, true) => "prud_eqvc",
        }
    }
}

impl fmt::Display for VoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vote {
    pub voter: ReplicaId,
    pub view: View,
    pub block: BlockId,
    pub vtype: VoteType,
    pub sig: Signature,
}

impl Vote {
    pub fn new(
        key: &KeyPair,
        ring: &KeyRing,
        view: View,
        block: BlockId,
        vtype: VoteType,
    ) -> Self {
        let voter = key.replica();
        let sig = ring.sign(key, &codec::vote_payload(voter, view, block, vtype));
        Vote {
            voter,
            view,
            block,
            vtype,
            sig,
        }
    }

    pub fn verify(&self, ring: &KeyRing) -> bool {
        self.sig.signer == self.voter
            && ring.verify(
                &codec::vote_payload(self.voter, self.view, self.block, self.vtype),
                &self.sig,
            )
    }
}

/// At least `n - f` same-typed votes from distinct replicas for one block in one view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuorumCert {
    view: View,
    block: BlockId,
    qtype: VoteType,
    votes: Vec<Vote>,
}

impl QuorumCert {
    /// Assembles a certificate; votes are kept sorted by voter.
    pub fn new(committee: &Committee, votes: Vec<Vote>) -> Result<Self, CertError> {
        let mut votes = votes;
        votes.sort_by_key(|v| v.voter);
        for pair in votes.windows(2) {
            if pair[0].voter == pair[1].voter {
                return Err(CertError::DuplicateSigner(pair[0].voter));
            }
        }
        if let Some(stranger) = votes.iter().find(|v| !committee.contains(v.voter)) {
            return Err(CertError::UnknownSigner(stranger.voter));
        }
        let Some(first) = votes.first() else {
            return Err(CertError::Insufficient {
                got: 0,
                need: committee.quorum(),
            });
        };
        let (view, block, qtype) = (first.view, first.block, first.vtype);
        if votes
            .iter()
            .any(|v| v.view != view || v.block != block || v.vtype != qtype)
        {
            return Err(CertError::MixedVotes);
        }
        if votes.len() < committee.quorum() {
            return Err(CertError::Insufficient {
                got: votes.len(),
                need: committee.quorum(),
            });
        }
        Ok(QuorumCert {
            view,
            block,
            qtype,
            votes,
        })
    }

    /// The synthetic view-0 certificate over genesis.
    pub fn genesis(genesis: BlockId) -> Self {
        QuorumCert {
            view: View::GENESIS,
            block: genesis,
            qtype: VoteType::NORMAL,
            votes: Vec::new(),
        }
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn block(&self) -> BlockId {
        self.block
    }

    pub fn qtype(&self) -> VoteType {
        self.qtype
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn is_genesis(&self) -> bool {
        self.view == View::GENESIS && self.votes.is_empty()
    }

    /// Checks quorum size and every vote signature. The genesis certificate is
    /// only accepted when it certifies `genesis`.
    pub fn verify(&self, committee: &Committee, ring: &KeyRing, genesis: BlockId) -> bool {
        if self.is_genesis() {
            return self.block == genesis && self.qtype == VoteType::NORMAL;
        }
        self.votes.len() >= committee.quorum()
            && self.votes.windows(2).all(|p| p[0].voter < p[1].voter)
            && self.votes.iter().all(|v| {
                committee.contains(v.voter)
                    && v.view == self.view
                    && v.block == self.block
                    && v.vtype == self.qtype
                    && v.verify(ring)
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeoutMsg {
    pub sender: ReplicaId,
    pub view: View,
    pub high_vote: Arc<Block>,
    pub sig: Signature,
}

impl TimeoutMsg {
    pub fn new(key: &KeyPair, ring: &KeyRing, view: View, high_vote: Arc<Block>) -> Self {
        let sender = key.replica();
        let sig = ring.sign(key, &codec::timeout_payload(sender, view, high_vote.id()));
        TimeoutMsg {
            sender,
            view,
            high_vote,
            sig,
        }
    }

    /// Sender signature plus the `high_vote.view <= view` invariant and the
    /// embedded block's proposer signature.
    pub fn verify(&self, ring: &KeyRing) -> bool {
        self.sig.signer == self.sender
            && self.high_vote.view() <= self.view
            && ring.verify(
                &codec::timeout_payload(self.sender, self.view, self.high_vote.id()),
                &self.sig,
            )
            && self.high_vote.verify_signature(ring)
    }
}

/// At least `n - f` timeout messages for one view from distinct senders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeoutCert {
    view: View,
    msgs: Vec<Arc<TimeoutMsg>>,
}

impl TimeoutCert {
    pub fn new(committee: &Committee, msgs: Vec<Arc<TimeoutMsg>>) -> Result<Self, CertError> {
        let mut msgs = msgs;
        msgs.sort_by_key(|m| m.sender);
        for pair in msgs.windows(2) {
            if pair[0].sender == pair[1].sender {
                return Err(CertError::DuplicateSigner(pair[0].sender));
            }
        }
        if let Some(stranger) = msgs.iter().find(|m| !committee.contains(m.sender)) {
            return Err(CertError::UnknownSigner(stranger.sender));
        }
        let Some(first) = msgs.first() else {
            return Err(CertError::Insufficient {
                got: 0,
                need: committee.quorum(),
            });
        };
        let view = first.view;
        if msgs.iter().any(|m| m.view != view) {
            return Err(CertError::MixedViews);
        }
        if msgs.len() < committee.quorum() {
            return Err(CertError::Insufficient {
                got: msgs.len(),
                need: committee.quorum(),
            });
        }
        Ok(TimeoutCert { view, msgs })
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn msgs(&self) -> &[Arc<TimeoutMsg>] {
        &self.msgs
    }

    pub fn digest(&self) -> [u8; 32] {
        digest(&codec::tc_summary(self))
    }

    pub fn verify(&self, committee: &Committee, ring: &KeyRing) -> bool {
        self.msgs.len() >= committee.quorum()
            && self.msgs.windows(2).all(|p| p[0].sender < p[1].sender)
            && self
                .msgs
                .iter()
                .all(|m| committee.contains(m.sender) && m.view == self.view && m.verify(ring))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    ByVotes,
    ByTimeout,
}

/// Unsigned block contents, as assembled by a proposer.
#[derive(Clone, Debug)]
pub struct BlockContents {
    pub proposer: ReplicaId,
    pub view: View,
    pub parent: BlockId,
    pub qc: Arc<QuorumCert>,
    pub tc: Option<Arc<TimeoutCert>>,
    pub tmo_set: Option<Vec<Arc<TimeoutMsg>>>,
    pub cnt_tmo: u32,
    pub payload: Vec<u8>,
}

impl BlockContents {
    /// A block justified by a quorum certificate over its parent.
    pub fn by_votes(proposer: ReplicaId, view: View, qc: Arc<QuorumCert>, payload: Vec<u8>) -> Self {
        BlockContents {
            proposer,
            view,
            parent: qc.block(),
            qc,
            tc: None,
            tmo_set: None,
            cnt_tmo: 0,
            payload,
        }
    }

    /// A block justified by a timeout certificate. `tmo_set` is the certificate's
    /// message list.
    pub fn by_timeout(
        proposer: ReplicaId,
        view: View,
        parent: BlockId,
        qc: Arc<QuorumCert>,
        tc: Arc<TimeoutCert>,
        cnt_tmo: u32,
        payload: Vec<u8>,
    ) -> Self {
        let tmo_set = tc.msgs().to_vec();
        BlockContents {
            proposer,
            view,
            parent,
            qc,
            tc: Some(tc),
            tmo_set: Some(tmo_set),
            cnt_tmo,
            payload,
        }
    }

    pub fn origin(&self) -> Origin {
        if self.tc.is_some() || self.tmo_set.is_some() {
            Origin::ByTimeout
        } else {
            Origin::ByVotes
        }
    }
}

/// An immutable, signed block. Its identity is the digest of its header; fields
/// are read-only so the identity cannot drift from the contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    id: BlockId,
    contents: BlockContents,
    sig: Signature,
}

impl PartialEq for BlockContents {
    fn eq(&self, other: &Self) -> bool {
        codec::block_header(self) == codec::block_header(other)
    }
}

impl Eq for BlockContents {}

impl Block {
    pub fn new(contents: BlockContents, key: &KeyPair, ring: &KeyRing) -> Self {
        let id = BlockId(digest(&codec::block_header(&contents)));
        let sig = ring.sign(key, &id.0);
        Block { id, contents, sig }
    }

    /// The synthetic genesis block: view 0, self-certified, committed by definition.
    pub fn genesis() -> Arc<Block> {
        let id = BlockId(digest(b"pbg/genesis"));
        let contents = BlockContents {
            proposer: ReplicaId(0),
            view: View::GENESIS,
            parent: BlockId::ZERO,
            qc: Arc::new(QuorumCert::genesis(id)),
            tc: None,
            tmo_set: None,
            cnt_tmo: 0,
            payload: Vec::new(),
        };
        Arc::new(Block {
            id,
            contents,
            sig: Signature::synthetic(ReplicaId(0)),
        })
    }

    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn proposer(&self) -> ReplicaId {
        self.contents.proposer
    }

    pub fn view(&self) -> View {
        self.contents.view
    }

    pub fn parent(&self) -> BlockId {
        self.contents.parent
    }

    pub fn qc(&self) -> &Arc<QuorumCert> {
        &self.contents.qc
    }

    /// The block certified by this block's QC.
    pub fn qc_block(&self) -> BlockId {
        self.contents.qc.block()
    }

    pub fn tc(&self) -> Option<&Arc<TimeoutCert>> {
        self.contents.tc.as_ref()
    }

    pub fn tmo_set(&self) -> Option<&[Arc<TimeoutMsg>]> {
        self.contents.tmo_set.as_deref()
    }

    pub fn cnt_tmo(&self) -> u32 {
        self.contents.cnt_tmo
    }

    pub fn payload(&self) -> &[u8] {
        &self.contents.payload
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn origin(&self) -> Origin {
        self.contents.origin()
    }

    pub fn contents(&self) -> &BlockContents {
        &self.contents
    }

    pub fn is_genesis(&self) -> bool {
        self.contents.view == View::GENESIS && self.contents.parent == BlockId::ZERO
    }

    /// Proposer signature over the block identity, and the identity over the header.
    pub fn verify_signature(&self, ring: &KeyRing) -> bool {
        if self.is_genesis() {
            return self.id == Block::genesis().id;
        }
        self.sig.signer == self.contents.proposer
            && self.id.0 == digest(&codec::block_header(&self.contents))
            && ring.verify(&self.id.0, &self.sig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keys;
    use alloc::vec;

    fn votes_for(
        ring: &KeyRing,
        keys: &[KeyPair],
        voters: &[usize],
        view: u64,
        block: BlockId,
        vtype: VoteType,
    ) -> Vec<Vote> {
        voters
            .iter()
            .map(|&i| Vote::new(&keys[i], ring, View(view), block, vtype))
            .collect()
    }

    #[test]
    fn committee_shape() {
        let c = Committee::new(2);
        assert_eq!((c.n(), c.f(), c.quorum()), (7, 2, 5));
        assert_eq!(c.leader(View(9)), ReplicaId(2));
        assert!(Committee::from_n(7).is_some());
        assert!(Committee::from_n(6).is_none());
    }

    #[test]
    fn qc_rejects_duplicates_mixes_and_short_sets() {
        let (ring, keys) = generate_keys(4, 0);
        let c = Committee::new(1);
        let b = BlockId([1; 32]);
        let other = BlockId([2; 32]);

        let good = votes_for(&ring, &keys, &[0, 1, 2], 3, b, VoteType::NORMAL);
        let qc = QuorumCert::new(&c, good.clone()).unwrap();
        assert!(qc.verify(&c, &ring, BlockId::ZERO));

        let mut dup = good.clone();
        dup[2] = dup[0].clone();
        assert_eq!(
            QuorumCert::new(&c, dup),
            Err(CertError::DuplicateSigner(ReplicaId(0)))
        );

        let mut mixed = good.clone();
        mixed[1] = Vote::new(&keys[1], &ring, View(3), b, VoteType::EQVC);
        assert_eq!(QuorumCert::new(&c, mixed), Err(CertError::MixedVotes));

        let mut other_block = good.clone();
        other_block[1] = Vote::new(&keys[1], &ring, View(3), other, VoteType::NORMAL);
        assert_eq!(QuorumCert::new(&c, other_block), Err(CertError::MixedVotes));

        assert_eq!(
            QuorumCert::new(&c, good[..2].to_vec()),
            Err(CertError::Insufficient { got: 2, need: 3 })
        );
    }

    #[test]
    fn tampered_vote_breaks_qc_verification() {
        let (ring, keys) = generate_keys(4, 0);
        let c = Committee::new(1);
        let mut votes = votes_for(&ring, &keys, &[0, 1, 3], 3, BlockId([1; 32]), VoteType::PRUD);
        votes[2].sig = votes[1].sig.clone();
        let qc = QuorumCert::new(&c, votes).unwrap();
        assert!(!qc.verify(&c, &ring, BlockId::ZERO));
    }

    #[test]
    fn block_identity_tracks_contents() {
        let (ring, keys) = generate_keys(4, 0);
        let genesis = Block::genesis();
        let qc = genesis.qc().clone();
        let a = Block::new(
            BlockContents::by_votes(ReplicaId(1), View(1), qc.clone(), vec![1]),
            &keys[1],
            &ring,
        );
        let b = Block::new(
            BlockContents::by_votes(ReplicaId(1), View(1), qc, vec![2]),
            &keys[1],
            &ring,
        );
        assert_ne!(a.id(), b.id());
        assert!(a.verify_signature(&ring));
        assert_eq!(a.origin(), Origin::ByVotes);
        assert_eq!(a.qc_block(), genesis.id());
        assert!(genesis.verify_signature(&ring));
    }

    #[test]
    fn block_id_displays_as_hex() {
        let id = BlockId([0xab; 32]);
        let text = alloc::format!("{id}");
        assert_eq!(text.len(), 64);
        assert!(text.chars().all(|c| c == 'a' || c == 'b'));
    }
}
