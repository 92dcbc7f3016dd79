//! The replica state machine.
//!
//! One [`Replica`] type runs every protocol in the comparison; [`Protocol`]
//! selects the validation, vote transport, parent selection and commit rule. A
//! replica is a pure event handler: [`Replica::handle`] consumes one input and
//! returns the messages to send, an optional new timer deadline, and notes for
//! the trace.

mod commit;
mod pacemaker;
mod propose;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use commit::{commit_rule, get_nonprud_qc_block};

use crate::baselines;
use crate::crypto::KeyPair;
use crate::error::ValidationError;
use crate::rank::{rank, RankMode};
use crate::store::BlockStore;
use crate::types::{
    Block, BlockId, Committee, Origin, QuorumCert, ReplicaId, TimeoutMsg, View, Vote, VoteType,
};
use crate::validation::{ValidationContext, ValidationStats, Validator};

/// Simulated time in milliseconds.
pub type SimTime = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Prudent BeeGees.
    Pbg,
    /// Prudent BeeGees with vote broadcast and boost commit.
    PbgCb,
    /// Fast-HotStuff.
    Fhs,
    /// Chained HotStuff.
    Chs,
    /// BeeGees validation without traceback or prudence.
    NaiveBeeGees,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Pbg,
        Protocol::PbgCb,
        Protocol::Fhs,
        Protocol::Chs,
        Protocol::NaiveBeeGees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pbg => "pbg",
            Protocol::PbgCb => "pbg_cb",
            Protocol::Fhs => "fhs",
            Protocol::Chs => "chs",
            Protocol::NaiveBeeGees => "naive",
        }
    }

    /// Accepts the short names plus a few common spellings.
    pub fn parse(text: &str) -> Option<Protocol> {
        let norm: alloc::string::String = text
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "pbg" | "pbeegees" => Some(Protocol::Pbg),
            "pbgcb" | "pbeegeescb" | "cb" => Some(Protocol::PbgCb),
            "fhs" | "fasthotstuff" => Some(Protocol::Fhs),
            "chs" | "chainedhotstuff" | "hotstuff" => Some(Protocol::Chs),
            "naive" | "naivebeegees" | "beegees" => Some(Protocol::NaiveBeeGees),
            _ => None,
        }
    }

    pub fn rank_mode(self, f: usize) -> RankMode {
        match self {
            Protocol::PbgCb => RankMode::VoteCount { f },
            _ => RankMode::Plain,
        }
    }

    pub fn broadcasts_votes(self) -> bool {
        self == Protocol::PbgCb
    }

    /// Uses traceback validation and the typed-QC commit rule.
    pub fn is_prudent(self) -> bool {
        matches!(self, Protocol::Pbg | Protocol::PbgCb)
    }

    pub fn is_hotstuff(self) -> bool {
        matches!(self, Protocol::Fhs | Protocol::Chs)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub committee: Committee,
    /// Prudence degree.
    pub pd: u32,
    /// Post-GST delivery bound.
    pub delta_ms: u64,
    /// View timer duration.
    pub timeout_ms: u64,
}

impl ProtocolConfig {
    /// Timer of five message delays, as used by the liveness argument.
    pub fn new(committee: Committee, pd: u32, delta_ms: u64) -> Self {
        ProtocolConfig {
            committee,
            pd,
            delta_ms,
            timeout_ms: 5 * delta_ms,
        }
    }

    pub fn timeout_for(&self, _view: View) -> u64 {
        self.timeout_ms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Destination {
    To(ReplicaId),
    All,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    /// A block plus the uncommitted ancestors the sender knows, so receivers
    /// can validate without fetching.
    Proposal {
        block: Arc<Block>,
        segment: Vec<Arc<Block>>,
    },
    Vote(Vote),
    /// A timeout message plus the sender's highest QC, which lets a replica
    /// that missed that QC catch up to the sender's view.
    Timeout {
        msg: Arc<TimeoutMsg>,
        high_qc: Arc<QuorumCert>,
        segment: Vec<Arc<Block>>,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Proposal { .. } => "proposal",
            Message::Vote(_) => "vote",
            Message::Timeout { .. } => "timeout",
        }
    }

    pub fn view(&self) -> View {
        match self {
            Message::Proposal { block, .. } => block.view(),
            Message::Vote(v) => v.view,
            Message::Timeout { msg, .. } => msg.view,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Input {
    Start,
    Deliver { from: ReplicaId, msg: Arc<Message> },
    Timer { deadline: SimTime },
}

/// Certificate a view was entered with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Via {
    Qc(View),
    Tc(View),
}

impl Via {
    pub fn cert_view(self) -> View {
        match self {
            Via::Qc(v) | Via::Tc(v) => v,
        }
    }
}

/// Observable protocol events, recorded into the trace by the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Note {
    Propose {
        block: BlockId,
        view: View,
        parent: BlockId,
        origin: Origin,
        cnt_tmo: u32,
    },
    Vote {
        view: View,
        block: BlockId,
        vtype: VoteType,
        cnt_tmo: u32,
    },
    Timeout {
        view: View,
        high_vote: BlockId,
    },
    ViewEnter {
        view: View,
        via: Via,
    },
    QcFormed {
        view: View,
        block: BlockId,
        qtype: VoteType,
    },
    TcFormed {
        view: View,
    },
    Commit {
        block: BlockId,
        view: View,
        parent: BlockId,
        boosted: bool,
    },
    Drop {
        reason: &'static str,
        block: Option<BlockId>,
    },
    /// A leader found no valid timeout candidate and extended a certified block.
    NoValidParent {
        view: View,
    },
}

#[derive(Clone, Debug, Default)]
pub struct Effects {
    pub sends: Vec<(Destination, Arc<Message>)>,
    /// New absolute timer deadline, replacing any earlier one.
    pub timer: Option<SimTime>,
    pub notes: Vec<Note>,
}

impl Effects {
    fn send(&mut self, to: Destination, msg: Message) {
        self.sends.push((to, Arc::new(msg)));
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timer.is_none() && self.notes.is_empty()
    }
}

/// Decides whether this replica's leader slot in a view is stop-faulted.
pub type StopSchedule = Arc<dyn Fn(View) -> bool + Send + Sync>;

const MAX_ORPHANS: usize = 512;
const MAX_SEGMENT: usize = 128;

pub struct Replica {
    id: ReplicaId,
    key: KeyPair,
    protocol: Protocol,
    config: ProtocolConfig,
    validator: Validator,
    stop: Option<StopSchedule>,

    view: View,
    deadline: SimTime,
    store: BlockStore,
    high_vote: Arc<Block>,
    high_qc: Arc<QuorumCert>,
    locked: Option<(View, BlockId)>,
    last_voted: View,

    processed: BTreeSet<BlockId>,
    proposed: BTreeSet<View>,
    votes: BTreeMap<(View, BlockId, VoteType), BTreeMap<ReplicaId, Vote>>,
    qcs_formed: BTreeSet<(View, BlockId, VoteType)>,
    boost_pending: BTreeSet<BlockId>,
    timeouts: BTreeMap<View, BTreeMap<ReplicaId, Arc<TimeoutMsg>>>,
    own_timeouts: BTreeMap<View, Arc<TimeoutMsg>>,
    tcs_formed: BTreeSet<View>,
    awaiting_tc: Option<View>,

    committed: Vec<BlockId>,
    committed_set: BTreeSet<BlockId>,
    last_committed: Arc<Block>,
    deferred_commits: Vec<(BlockId, bool)>,

    orphans: BTreeMap<BlockId, Vec<(ReplicaId, Arc<Message>)>>,
    orphan_count: usize,
    fresh: Vec<BlockId>,
    dropped: u64,
}

impl fmt::Debug for Replica {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Replica")
            .field("id", &self.id)
            .field("protocol", &self.protocol)
            .field("view", &self.view)
            .field("committed", &self.committed.len())
            .finish_non_exhaustive()
    }
}

/// Outcome of checking a proposal.
struct Judgement {
    valid: bool,
    vtype: VoteType,
}

impl Replica {
    pub fn new(
        key: KeyPair,
        protocol: Protocol,
        config: ProtocolConfig,
        ring: crate::crypto::KeyRing,
        genesis: Arc<Block>,
    ) -> Self {
        let ctx = ValidationContext {
            committee: config.committee,
            ring,
            rank_mode: protocol.rank_mode(config.committee.f()),
            pd: config.pd,
        };
        let mut committed_set = BTreeSet::new();
        committed_set.insert(genesis.id());
        Replica {
            id: key.replica(),
            key,
            protocol,
            config,
            validator: Validator::new(ctx),
            stop: None,
            view: View::GENESIS,
            deadline: 0,
            store: BlockStore::new(genesis.clone()),
            high_vote: genesis.clone(),
            high_qc: genesis.qc().clone(),
            locked: None,
            last_voted: View::GENESIS,
            processed: BTreeSet::new(),
            proposed: BTreeSet::new(),
            votes: BTreeMap::new(),
            qcs_formed: BTreeSet::new(),
            boost_pending: BTreeSet::new(),
            timeouts: BTreeMap::new(),
            own_timeouts: BTreeMap::new(),
            tcs_formed: BTreeSet::new(),
            awaiting_tc: None,
            committed: Vec::new(),
            committed_set,
            last_committed: genesis,
            deferred_commits: Vec::new(),
            orphans: BTreeMap::new(),
            orphan_count: 0,
            fresh: Vec::new(),
            dropped: 0,
        }
    }

    /// Skip proposals in leader slots for which `stop` returns true.
    pub fn with_stop_schedule(mut self, stop: StopSchedule) -> Self {
        self.stop = Some(stop);
        self
    }

    /// Replace the validator, e.g. with one that does not cache verdicts.
    pub fn with_validator(mut self, validator: Validator) -> Self {
        self.validator = validator;
        self
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn committee(&self) -> &Committee {
        &self.config.committee
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn high_vote(&self) -> &Arc<Block> {
        &self.high_vote
    }

    pub fn high_qc(&self) -> &Arc<QuorumCert> {
        &self.high_qc
    }

    /// Committed blocks in commit order, genesis excluded.
    pub fn committed(&self) -> &[BlockId] {
        &self.committed
    }

    pub fn last_committed(&self) -> &Arc<Block> {
        &self.last_committed
    }

    pub fn validator(&self) -> &Validator {
        &self.validator
    }

    pub fn validator_mut(&mut self) -> &mut Validator {
        &mut self.validator
    }

    pub fn validation_stats(&self) -> ValidationStats {
        self.validator.stats()
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn timeouts_for(&self, view: View) -> impl Iterator<Item = &Arc<TimeoutMsg>> {
        self.timeouts.get(&view).into_iter().flat_map(|m| m.values())
    }

    pub fn handle(&mut self, now: SimTime, input: Input) -> Effects {
        let mut fx = Effects::default();
        match input {
            Input::Start => self.start(now, &mut fx),
            Input::Timer { deadline } => self.on_timer(now, deadline, &mut fx),
            Input::Deliver { from, msg } => self.dispatch(now, from, msg, &mut fx),
        }
        self.drain_fresh(now, &mut fx);
        fx
    }

    fn dispatch(&mut self, now: SimTime, from: ReplicaId, msg: Arc<Message>, fx: &mut Effects) {
        match &*msg {
            Message::Proposal { block, segment } => {
                self.absorb_all(segment);
                self.on_proposal(now, from, block.clone(), &msg, fx);
            }
            Message::Vote(vote) => self.on_vote(now, vote, fx),
            Message::Timeout {
                msg: tm,
                high_qc,
                segment,
            } => {
                self.absorb_all(segment);
                self.sync_to_qc(now, high_qc, fx);
                self.on_timeout_msg(now, tm.clone(), fx);
            }
        }
    }

    /// Retries work that was waiting for blocks that have since arrived.
    fn drain_fresh(&mut self, now: SimTime, fx: &mut Effects) {
        while !self.fresh.is_empty() {
            let fresh = core::mem::take(&mut self.fresh);
            for id in &fresh {
                if let Some(waiting) = self.orphans.remove(id) {
                    self.orphan_count -= waiting.len();
                    for (from, msg) in waiting {
                        self.dispatch(now, from, msg, fx);
                    }
                }
                if self.boost_pending.remove(id) {
                    self.commit(*id, true, fx);
                }
            }
            if !self.deferred_commits.is_empty() {
                for (target, boosted) in core::mem::take(&mut self.deferred_commits) {
                    self.commit(target, boosted, fx);
                }
            }
            if let Some(view) = self.awaiting_tc {
                if view == self.view {
                    self.propose_by_tc(now, fx);
                }
            }
        }
    }

    pub(crate) fn absorb(&mut self, block: &Arc<Block>) {
        if self.store.contains(block.id()) {
            return;
        }
        if let Some(set) = block.tmo_set() {
            for m in set {
                self.absorb(&m.high_vote);
            }
        }
        self.store.insert(block.clone());
        self.fresh.push(block.id());
    }

    fn absorb_all(&mut self, blocks: &[Arc<Block>]) {
        // Oldest first keeps orphan retries from thrashing.
        for b in blocks.iter().rev() {
            self.absorb(b);
        }
    }

    fn judge(&mut self, b: &Block) -> Result<Judgement, ValidationError> {
        let ctx = self.validator.ctx().clone();
        match self.protocol {
            Protocol::Pbg | Protocol::PbgCb => {
                let result = self.validator.valid_chain(b, &self.store)?;
                Ok(Judgement {
                    valid: result.is_valid(),
                    vtype: result.vote_type().unwrap_or(VoteType::NORMAL),
                })
            }
            Protocol::NaiveBeeGees => Ok(Judgement {
                valid: baselines::naive_beegees_validate(b, &self.store, &ctx)?,
                vtype: VoteType::NORMAL,
            }),
            Protocol::Fhs | Protocol::Chs => Ok(Judgement {
                valid: baselines::hotstuff_valid(b, &self.store, &ctx)?,
                vtype: VoteType::NORMAL,
            }),
        }
    }

    fn drop_note(&mut self, reason: &'static str, block: Option<BlockId>, fx: &mut Effects) {
        self.dropped += 1;
        fx.notes.push(Note::Drop { reason, block });
    }

    fn on_proposal(
        &mut self,
        now: SimTime,
        from: ReplicaId,
        block: Arc<Block>,
        raw: &Arc<Message>,
        fx: &mut Effects,
    ) {
        if self.processed.contains(&block.id()) {
            return;
        }
        self.absorb(&block);
        let judgement = match self.judge(&block) {
            Ok(j) => j,
            Err(ValidationError::UnknownBlock(missing)) => {
                if self.orphan_count < MAX_ORPHANS {
                    self.orphans
                        .entry(missing)
                        .or_default()
                        .push((from, raw.clone()));
                    self.orphan_count += 1;
                } else {
                    self.drop_note("missing ancestor", Some(block.id()), fx);
                }
                return;
            }
            Err(ValidationError::MalformedCert { .. }) => {
                self.processed.insert(block.id());
                self.drop_note("malformed certificate", Some(block.id()), fx);
                return;
            }
        };
        self.processed.insert(block.id());
        if !judgement.valid {
            // A well-formed certificate still proves the previous view ended.
            if let Some(via) = self.certified_entry(&block) {
                self.advance(now, block.view(), via, fx);
            }
            self.drop_note("invalid block", Some(block.id()), fx);
            return;
        }

        let via = match block.tc() {
            Some(tc) => Via::Tc(tc.view()),
            None => Via::Qc(block.qc().view()),
        };
        self.advance(now, block.view(), via, fx);
        self.observe_qc(block.qc());
        self.apply_commit_rule(&block, fx);
        self.maybe_vote(&block, judgement.vtype, fx);
    }

    fn certified_entry(&self, b: &Block) -> Option<Via> {
        if b.view() <= self.view || b.view() == View::GENESIS {
            return None;
        }
        let ctx = self.validator.ctx();
        match b.tc() {
            Some(tc) if tc.view().next() == b.view() && tc.verify(&ctx.committee, &ctx.ring) => {
                Some(Via::Tc(tc.view()))
            }
            Some(_) => None,
            None => {
                let qc = b.qc();
                (qc.view().next() == b.view()
                    && qc.verify(&ctx.committee, &ctx.ring, self.store.genesis()))
                .then_some(Via::Qc(qc.view()))
            }
        }
    }

    fn observe_qc(&mut self, qc: &Arc<QuorumCert>) {
        if qc.view() > self.high_qc.view() {
            self.high_qc = qc.clone();
        }
    }

    fn apply_commit_rule(&mut self, b: &Block, fx: &mut Effects) {
        let target = match self.protocol {
            Protocol::Pbg | Protocol::PbgCb => commit_rule(b, &self.store),
            Protocol::Fhs => baselines::fhs_commit_rule(b, &self.store),
            Protocol::Chs => baselines::chs_commit_rule(b, &self.store),
            Protocol::NaiveBeeGees => baselines::naive_beegees_commit_rule(b, &self.store),
        };
        if let Ok(Some(target)) = target {
            self.commit(target, false, fx);
        }
    }

    fn chs_safe(&mut self, b: &Block) -> bool {
        if let Ok(candidate) = baselines::chs_lock_candidate(b, &self.store) {
            if let Some(lock) = self.store.get(candidate) {
                let entry = (lock.view(), lock.id());
                if self.locked.is_none_or(|(v, _)| entry.0 > v) {
                    self.locked = Some(entry);
                }
            }
        }
        match self.locked {
            None => true,
            Some((lock_view, lock_id)) => {
                b.qc().view() > lock_view
                    || self.store.is_ancestor(lock_id, b.id()).unwrap_or(false)
            }
        }
    }

    fn maybe_vote(&mut self, b: &Arc<Block>, vtype: VoteType, fx: &mut Effects) {
        let view = b.view();
        if view != self.view || self.last_voted >= view || self.own_timeouts.contains_key(&view) {
            return;
        }
        if self.protocol == Protocol::Chs && !self.chs_safe(b) {
            self.drop_note("conflicts with lock", Some(b.id()), fx);
            return;
        }
        self.last_voted = view;
        let vote = Vote::new(&self.key, &self.validator.ctx().ring, view, b.id(), vtype);
        self.record_high_vote(b, vtype.prud);
        fx.notes.push(Note::Vote {
            view,
            block: b.id(),
            vtype,
            cnt_tmo: b.cnt_tmo(),
        });
        let msg = Arc::new(Message::Vote(vote));
        if self.protocol.broadcasts_votes() {
            fx.sends.push((Destination::All, msg));
        } else {
            let next = self.config.committee.leader(view.next());
            fx.sends.push((Destination::To(next), msg.clone()));
            if self.protocol.is_prudent() || self.protocol == Protocol::NaiveBeeGees {
                if b.proposer() != next {
                    fx.sends.push((Destination::To(b.proposer()), msg));
                }
            }
        }
    }

    /// After a prudent vote the parent is recorded instead of the block; the
    /// record only ever moves up in rank.
    fn record_high_vote(&mut self, b: &Arc<Block>, prud: bool) {
        let candidate = if prud && self.protocol.is_prudent() {
            match self.store.get(b.parent()) {
                Some(p) => p.clone(),
                None => return,
            }
        } else {
            b.clone()
        };
        if rank(&candidate, &self.high_vote) {
            self.high_vote = candidate;
        }
    }

    fn on_vote(&mut self, now: SimTime, vote: &Vote, fx: &mut Effects) {
        if !self.config.committee.contains(vote.voter) || !vote.verify(&self.validator.ctx().ring)
        {
            self.drop_note("bad vote signature", Some(vote.block), fx);
            return;
        }
        let key = (vote.view, vote.block, vote.vtype);
        let bucket = self.votes.entry(key).or_default();
        if bucket.contains_key(&vote.voter) {
            return;
        }
        bucket.insert(vote.voter, vote.clone());
        let count = bucket.len();

        if self.protocol == Protocol::PbgCb
            && vote.vtype == VoteType::NORMAL
            && count == self.config.committee.n()
        {
            self.boost(vote.block, fx);
        }
        if count >= self.config.committee.quorum() && !self.qcs_formed.contains(&key) {
            let votes: Vec<Vote> = self.votes[&key].values().cloned().collect();
            if let Ok(qc) = QuorumCert::new(&self.config.committee, votes) {
                self.qcs_formed.insert(key);
                self.on_qc(now, Arc::new(qc), fx);
            }
        }
    }

    fn boost(&mut self, block: BlockId, fx: &mut Effects) {
        if self.store.contains(block) {
            self.commit(block, true, fx);
        } else {
            self.boost_pending.insert(block);
        }
    }

    fn on_qc(&mut self, now: SimTime, qc: Arc<QuorumCert>, fx: &mut Effects) {
        fx.notes.push(Note::QcFormed {
            view: qc.view(),
            block: qc.block(),
            qtype: qc.qtype(),
        });
        self.observe_qc(&qc);
        let next = qc.view().next();
        self.advance(now, next, Via::Qc(qc.view()), fx);
        if self.view == next && self.config.committee.leader(next) == self.id {
            let _ = self.propose_by_qc(qc, fx);
        }
    }

    /// Commits `target` and every uncommitted ancestor, oldest first.
    fn commit(&mut self, target: BlockId, boosted: bool, fx: &mut Effects) {
        if self.committed_set.contains(&target) {
            return;
        }
        let mut path = Vec::new();
        let mut cur = target;
        while !self.committed_set.contains(&cur) {
            match self.store.get(cur) {
                Some(b) => {
                    path.push(b.clone());
                    cur = b.parent();
                }
                None => {
                    self.deferred_commits.push((target, boosted));
                    return;
                }
            }
        }
        for b in path.into_iter().rev() {
            self.committed_set.insert(b.id());
            self.committed.push(b.id());
            fx.notes.push(Note::Commit {
                block: b.id(),
                view: b.view(),
                parent: b.parent(),
                boosted,
            });
            if b.view() > self.last_committed.view() {
                self.last_committed = b;
            }
        }
    }

    /// Uncommitted ancestors of `starts` (each start's parent first), newest
    /// first and deduplicated.
    fn segment_for(&self, starts: &[&Block]) -> Vec<Arc<Block>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for start in starts {
            let mut cur = start.parent();
            while out.len() < MAX_SEGMENT
                && !self.committed_set.contains(&cur)
                && seen.insert(cur)
            {
                let Some(b) = self.store.get(cur) else { break };
                out.push(b.clone());
                cur = b.parent();
            }
        }
        out
    }
}
