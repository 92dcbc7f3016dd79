//! Random small block trees and a brute-force validity checker written
//! directly from the block rules, sharing no code with the validator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use pbeegees_core::crypto::{generate_keys, KeyPair, KeyRing};
use pbeegees_core::rank::RankMode;
use pbeegees_core::sim::rng::stream;
use pbeegees_core::store::BlockStore;
use pbeegees_core::validation::{ValidationContext, ValidationResult, Validator, Verdict};
use pbeegees_core::types::BlockContents;
use pbeegees_core::{
    Block, BlockId, Committee, QuorumCert, ReplicaId, TimeoutCert, TimeoutMsg, ValidationError,
    View, Vote, VoteType,
};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MAX_BLOCKS: usize = 5;

/// What the checker concluded about one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expected {
    Result(ValidationResult),
    /// A certificate or signed message inside the block does not verify.
    Malformed,
}

pub struct Case {
    pub ctx: ValidationContext,
    pub store: BlockStore,
    /// Generated blocks in creation order, genesis excluded.
    pub blocks: Vec<Arc<Block>>,
}

struct Gen {
    rng: ChaCha8Rng,
    committee: Committee,
    ring: KeyRing,
    keys: Vec<KeyPair>,
    all: Vec<Arc<Block>>,
    qcs: HashMap<BlockId, Arc<QuorumCert>>,
}

impl Gen {
    fn vtype(&mut self) -> VoteType {
        match self.rng.random_range(0..6) {
            0 => VoteType { prud: true, eqvc: false },
            1 => VoteType { prud: false, eqvc: true },
            _ => VoteType::NORMAL,
        }
    }

    /// Any block may be certified, including same-view siblings.
    fn qc_for(&mut self, b: &Arc<Block>) -> Arc<QuorumCert> {
        if let Some(qc) = self.qcs.get(&b.id()) {
            if self.rng.random_bool(0.8) {
                return qc.clone();
            }
        }
        if b.is_genesis() {
            return b.qc().clone();
        }
        let vtype = self.vtype();
        let mut voters: Vec<usize> = (0..self.committee.n()).collect();
        let drop = self.rng.random_range(0..voters.len());
        voters.remove(drop);
        let view = if self.rng.random_bool(0.05) {
            b.view().next()
        } else {
            b.view()
        };
        let votes = voters
            .iter()
            .map(|&i| Vote::new(&self.keys[i], &self.ring, view, b.id(), vtype))
            .collect();
        let qc = Arc::new(QuorumCert::new(&self.committee, votes).unwrap());
        self.qcs.insert(b.id(), qc.clone());
        qc
    }

    fn lineage(&self, b: &Arc<Block>) -> Vec<Arc<Block>> {
        let by_id: HashMap<BlockId, &Arc<Block>> = self.all.iter().map(|b| (b.id(), b)).collect();
        let mut out = vec![b.clone()];
        let mut cur = b.clone();
        while !cur.is_genesis() {
            cur = by_id[&cur.parent()].clone();
            out.push(cur.clone());
        }
        out
    }

    fn step(&mut self) {
        let top = self.all.iter().map(|b| b.view()).max().unwrap();
        let twin = if self.all.len() > 1 && self.rng.random_bool(0.25) {
            self.all[1..].choose(&mut self.rng).cloned()
        } else {
            None
        };
        let view = match &twin {
            Some(t) => t.view(),
            None => View(top.0 + self.rng.random_range(1..=2)),
        };
        let below: Vec<Arc<Block>> = self
            .all
            .iter()
            .filter(|b| b.view() < view && b.verify_signature(&self.ring))
            .cloned()
            .collect();
        // A twin usually shares its sibling's parent: an equivocating leader.
        let twin_parent = twin
            .filter(|_| self.rng.random_bool(0.7))
            .and_then(|t| below.iter().find(|b| b.id() == t.parent()).cloned());
        let parent = match twin_parent {
            Some(p) => p,
            None if self.rng.random_bool(0.6) => below.iter().max_by_key(|b| b.view()).unwrap().clone(),
            None => below.choose(&mut self.rng).unwrap().clone(),
        };
        let n = self.committee.n() as u32;
        let proposer = if self.rng.random_bool(0.9) {
            self.committee.leader(view)
        } else {
            ReplicaId(self.rng.random_range(0..n))
        };
        let payload = vec![self.rng.random::<u8>()];
        let mut contents = if self.rng.random_bool(0.4) {
            self.by_votes(proposer, view, &parent, payload)
        } else {
            self.by_timeout(proposer, view, &parent, payload)
        };
        if self.rng.random_bool(0.04) {
            contents.cnt_tmo = self.rng.random_range(0..5);
        }
        let signer = if self.rng.random_bool(0.95) {
            proposer.index()
        } else {
            self.rng.random_range(0..n as usize)
        };
        let block = Arc::new(Block::new(contents, &self.keys[signer], &self.ring));
        self.all.push(block);
    }

    fn by_votes(
        &mut self,
        proposer: ReplicaId,
        view: View,
        parent: &Arc<Block>,
        payload: Vec<u8>,
    ) -> BlockContents {
        let qc = self.qc_for(parent);
        let mut contents = BlockContents::by_votes(proposer, view, qc, payload);
        if self.rng.random_bool(0.05) {
            let older: Vec<_> = self.all.iter().filter(|b| b.view() < view).collect();
            contents.parent = older.choose(&mut self.rng).unwrap().id();
        }
        contents
    }

    fn by_timeout(
        &mut self,
        proposer: ReplicaId,
        view: View,
        parent: &Arc<Block>,
        payload: Vec<u8>,
    ) -> BlockContents {
        let qc_block = if self.rng.random_bool(0.3) {
            parent.clone()
        } else if self.rng.random_bool(0.85) {
            let lineage = self.lineage(parent);
            lineage.choose(&mut self.rng).unwrap().clone()
        } else {
            let older: Vec<_> = self.all.iter().filter(|b| b.view() < view).cloned().collect();
            older.choose(&mut self.rng).unwrap().clone()
        };
        let qc = self.qc_for(&qc_block);

        // Messages only carry properly signed high votes no newer than their
        // own view, so every timeout message verifies.
        let tv = if view.0 >= 2 && parent.view().0 <= view.0 - 2 && self.rng.random_bool(0.05) {
            View(view.0 - 2)
        } else {
            view.prev()
        };
        let pool: Vec<Arc<Block>> = self
            .all
            .iter()
            .filter(|b| b.view() <= tv && b.verify_signature(&self.ring))
            .cloned()
            .collect();
        let n = self.committee.n();
        let size = if self.rng.random_bool(0.2) { n } else { self.committee.quorum() };
        let mut senders: Vec<usize> = (0..n).collect();
        while senders.len() > size {
            let i = self.rng.random_range(0..senders.len());
            senders.remove(i);
        }
        let carries_parent = self.rng.random_bool(0.95);
        let msgs: Vec<Arc<TimeoutMsg>> = senders
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let hv = if (k == 0 && carries_parent) || self.rng.random_bool(0.4) || pool.is_empty() {
                    parent.clone()
                } else if self.rng.random_bool(0.5) {
                    // Prefer blocks level with the parent so ties come up often.
                    let level: Vec<_> = pool.iter().filter(|b| b.view() == parent.view()).collect();
                    (*level.choose(&mut self.rng).unwrap_or(&parent)).clone()
                } else {
                    pool.choose(&mut self.rng).unwrap().clone()
                };
                Arc::new(TimeoutMsg::new(&self.keys[s], &self.ring, tv, hv))
            })
            .collect();
        let tc = Arc::new(TimeoutCert::new(&self.committee, msgs).unwrap());
        let cnt = if self.rng.random_bool(0.92) {
            parent.cnt_tmo() + 1
        } else {
            self.rng.random_range(0..5)
        };
        let mut contents =
            BlockContents::by_timeout(proposer, view, parent.id(), qc, tc, cnt, payload);
        if self.rng.random_bool(0.04) {
            contents.tmo_set.as_mut().unwrap().pop();
        }
        if self.rng.random_bool(0.03) {
            contents.tc = None;
        }
        contents
    }
}

/// A random tree of at most [`MAX_BLOCKS`] blocks over a four-replica
/// committee, with a random prudence degree and ranking mode.
pub fn generate(seed: u64) -> Case {
    let committee = Committee::new(1);
    let (ring, keys) = generate_keys(committee.n(), 7);
    let mut rng = stream(seed, "oracle-chains", 0);
    let pd = rng.random_range(1..=3);
    let rank_mode = if rng.random_bool(0.5) {
        RankMode::Plain
    } else {
        RankMode::VoteCount { f: committee.f() }
    };
    let count = rng.random_range(1..=MAX_BLOCKS);
    let genesis = Block::genesis();
    let mut gen = Gen {
        rng,
        committee,
        ring: ring.clone(),
        keys,
        all: vec![genesis.clone()],
        qcs: HashMap::new(),
    };
    for _ in 0..count {
        gen.step();
    }
    let mut store = BlockStore::new(genesis);
    for b in &gen.all[1..] {
        store.insert(b.clone());
    }
    Case {
        ctx: ValidationContext {
            committee,
            ring,
            rank_mode,
            pd,
        },
        store,
        blocks: gen.all[1..].to_vec(),
    }
}

/// Brute-force checker over a plain id-to-block map.
pub struct Checker<'a> {
    ctx: &'a ValidationContext,
    genesis: Arc<Block>,
    blocks: HashMap<BlockId, Arc<Block>>,
}

impl<'a> Checker<'a> {
    pub fn new(case: &'a Case) -> Self {
        let genesis = Block::genesis();
        let mut blocks: HashMap<BlockId, Arc<Block>> =
            case.blocks.iter().map(|b| (b.id(), b.clone())).collect();
        blocks.insert(genesis.id(), genesis.clone());
        Checker {
            ctx: &case.ctx,
            genesis,
            blocks,
        }
    }

    /// Every block on the parent chain of `id`, itself included.
    fn lineage(&self, id: BlockId) -> BTreeSet<BlockId> {
        let mut out = BTreeSet::new();
        let mut cur = id;
        loop {
            out.insert(cur);
            if cur == self.genesis.id() {
                return out;
            }
            cur = self.blocks[&cur].parent();
        }
    }

    fn conflicting(&self, a: BlockId, b: BlockId) -> bool {
        !self.lineage(b).contains(&a) && !self.lineage(a).contains(&b)
    }

    /// `(view, qc view)` first; in vote-count mode a distinct block backed by
    /// at least f + 1 timeout senders beats one that is not.
    fn higher(&self, x: &Block, y: &Block, set: &[Arc<TimeoutMsg>]) -> Option<bool> {
        let kx = (x.view().0, x.qc().view().0);
        let ky = (y.view().0, y.qc().view().0);
        if kx != ky {
            return Some(kx > ky);
        }
        let RankMode::VoteCount { f } = self.ctx.rank_mode else {
            return None;
        };
        if x.id() == y.id() {
            return None;
        }
        let backers = |id: BlockId| {
            set.iter()
                .filter(|m| m.high_vote.id() == id)
                .map(|m| m.sender)
                .collect::<BTreeSet<_>>()
                .len()
        };
        match (backers(x.id()) > f, backers(y.id()) > f) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        }
    }

    fn certificates_verify(&self, b: &Block) -> bool {
        let ring = &self.ctx.ring;
        let committee = &self.ctx.committee;
        if !b.qc().verify(committee, ring, self.genesis.id()) {
            return false;
        }
        match (b.tc(), b.tmo_set()) {
            (Some(tc), Some(_)) => tc.verify(committee, ring),
            _ => true,
        }
    }

    fn messages_verify(&self, b: &Block) -> bool {
        b.tmo_set()
            .is_none_or(|set| set.iter().all(|m| m.verify(&self.ctx.ring)))
    }

    /// The self-contained rules, as a list of conditions that must all hold.
    fn self_contained(&self, b: &Block) -> bool {
        if b.is_genesis() {
            return b.id() == self.genesis.id();
        }
        let n = self.ctx.committee.n() as u64;
        let qc = b.qc();
        let qc_block = &self.blocks[&qc.block()];
        let parent = &self.blocks[&b.parent()];
        let common = [
            b.view().0 > 0,
            b.proposer().0 as u64 == b.view().0 % n,
            b.verify_signature(&self.ctx.ring),
            qc_block.view() == qc.view(),
            qc.view() < b.view(),
            parent.view() < b.view(),
        ];
        if common.contains(&false) {
            return false;
        }
        let (tc, set) = match (b.tc(), b.tmo_set()) {
            (None, None) => {
                return b.parent() == qc.block()
                    && qc.view().0 + 1 == b.view().0
                    && b.cnt_tmo() == 0;
            }
            (Some(tc), Some(set)) => (tc, set),
            _ => return false,
        };
        let senders: BTreeSet<ReplicaId> = set.iter().map(|m| m.sender).collect();
        let mut mine: Vec<(ReplicaId, View, BlockId)> =
            set.iter().map(|m| (m.sender, m.view, m.high_vote.id())).collect();
        let mut certified: Vec<(ReplicaId, View, BlockId)> =
            tc.msgs().iter().map(|m| (m.sender, m.view, m.high_vote.id())).collect();
        mine.sort();
        certified.sort();
        let rules = [
            tc.view().0 + 1 == b.view().0,
            senders.len() == set.len() && senders.len() >= self.ctx.committee.quorum(),
            set.iter().all(|m| m.view == tc.view()),
            mine == certified,
            self.lineage(parent.id()).contains(&qc_block.id()),
            set.iter().any(|m| m.high_vote.id() == parent.id()),
            !set
                .iter()
                .any(|m| self.higher(&m.high_vote, parent, set) == Some(true)),
            b.cnt_tmo() == parent.cnt_tmo() + 1,
        ];
        !rules.contains(&false)
    }

    /// A timeout block whose timeout set holds an entry ranked level with the
    /// parent that conflicts with the block's certified ancestor.
    fn equivocation_evidence(&self, b: &Block) -> bool {
        let Some(set) = b.tmo_set() else {
            return false;
        };
        let parent = &self.blocks[&b.parent()];
        set.iter().any(|m| {
            m.high_vote.id() != parent.id()
                && self.higher(&m.high_vote, parent, set).is_none()
                && self.conflicting(m.high_vote.id(), b.qc_block())
        })
    }

    /// Walks the whole run of timeout blocks down to the nearest block
    /// justified by votes, then judges it in one pass.
    pub fn judge(&self, b: &Block) -> Expected {
        let mut run: Vec<Arc<Block>> = Vec::new();
        let mut cur = self.blocks[&b.id()].clone();
        loop {
            if !self.certificates_verify(&cur) || !self.messages_verify(&cur) {
                return Expected::Malformed;
            }
            run.push(cur.clone());
            if cur.is_genesis() || cur.tc().is_none() && cur.tmo_set().is_none() {
                break;
            }
            cur = self.blocks[&cur.parent()].clone();
        }
        let timeout_blocks = &run[..run.len() - 1];
        let invalid = run.iter().any(|x| !self.self_contained(x))
            || timeout_blocks.iter().any(|x| x.cnt_tmo() > self.ctx.pd);
        if invalid {
            return Expected::Result(ValidationResult::INVALID);
        }
        if timeout_blocks.is_empty() {
            return Expected::Result(ValidationResult::NORMAL);
        }
        let verdict = if timeout_blocks.iter().any(|x| self.equivocation_evidence(x)) {
            Verdict::Eqvc
        } else {
            Verdict::Normal
        };
        Expected::Result(ValidationResult {
            verdict,
            prud: b.cnt_tmo() == self.ctx.pd,
        })
    }
}

fn label(e: &Expected) -> &'static str {
    match e {
        Expected::Malformed => "malformed",
        Expected::Result(r) => match (r.verdict, r.prud) {
            (Verdict::Invalid, _) => "invalid",
            (Verdict::Normal, false) => "normal",
            (Verdict::Normal, true) => "normal_prud",
            (Verdict::Eqvc, false) => "eqvc",
            (Verdict::Eqvc, true) => "eqvc_prud",
        },
    }
}

/// Compares the validator with the checker on every block of every seed's
/// tree. Returns verdict counts, or the first disagreement.
pub fn equivalence(seeds: std::ops::Range<u64>) -> Result<BTreeMap<&'static str, usize>, String> {
    let mut seen = BTreeMap::new();
    for seed in seeds {
        let case = generate(seed);
        let checker = Checker::new(&case);
        let mut validator = Validator::uncached(case.ctx.clone());
        for b in &case.blocks {
            let expected = checker.judge(b);
            let got = match validator.valid_chain(b, &case.store) {
                Ok(r) => Expected::Result(r),
                Err(ValidationError::MalformedCert { .. }) => Expected::Malformed,
                Err(e) => return Err(format!("seed {seed}: validator failed: {e}")),
            };
            if got != expected {
                return Err(format!(
                    "seed {seed}, block at view {}: validator {got:?}, checker {expected:?}",
                    b.view().0
                ));
            }
            *seen.entry(label(&expected)).or_default() += 1;
        }
    }
    Ok(seen)
}
