//! Byzantine wrappers around an honest replica.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::faults::Script;
use crate::rank::rank;
use crate::replica::{Destination, Effects, Input, Message, Note, Replica, SimTime};
use crate::types::{
    Block, BlockContents, QuorumCert, ReplicaId, TimeoutCert, TimeoutMsg, View,
};

/// A simulated process: either an honest replica or a scripted byzantine one.
pub enum Node {
    Honest(Replica),
    Byzantine(Byzantine),
}

impl Node {
    pub fn replica(&self) -> &Replica {
        match self {
            Node::Honest(r) => r,
            Node::Byzantine(b) => &b.inner,
        }
    }

    pub fn is_correct(&self) -> bool {
        matches!(self, Node::Honest(_))
    }

    pub fn handle(&mut self, now: SimTime, input: Input) -> Effects {
        match self {
            Node::Honest(r) => r.handle(now, input),
            Node::Byzantine(b) => b.handle(now, input),
        }
    }
}

pub struct Byzantine {
    inner: Replica,
    script: Script,
    colluders: BTreeSet<ReplicaId>,
    poison: Option<Arc<Block>>,
    reported: BTreeSet<View>,
    extended: BTreeSet<View>,
    halted: bool,
}

impl Byzantine {
    pub fn new(inner: Replica, script: Script, colluders: BTreeSet<ReplicaId>) -> Self {
        Byzantine {
            inner,
            script,
            colluders,
            poison: None,
            reported: BTreeSet::new(),
            extended: BTreeSet::new(),
            halted: false,
        }
    }

    pub fn script(&self) -> Script {
        self.script
    }

    pub fn handle(&mut self, now: SimTime, input: Input) -> Effects {
        if self.halted || self.script == Script::Silent {
            return Effects::default();
        }
        if self.script == Script::Extender {
            self.spot_poison(&input);
        }
        let fx = self.inner.handle(now, input);
        match self.script {
            Script::Equivocate => self.equivocate(fx),
            Script::InvalidThenHalt { from } => self.invalid_then_halt(fx, from),
            Script::Extender => self.extend_poison(fx),
            Script::HollowInducer | Script::Silent => fx,
        }
    }

    fn me(&self) -> ReplicaId {
        self.inner.id()
    }

    fn sign(&self, contents: BlockContents) -> Arc<Block> {
        Arc::new(Block::new(
            contents,
            self.inner.key(),
            &self.inner.validator().ctx().ring,
        ))
    }

    fn timeout_with(&self, view: View, hv: Arc<Block>) -> Arc<TimeoutMsg> {
        Arc::new(TimeoutMsg::new(
            self.inner.key(),
            &self.inner.validator().ctx().ring,
            view,
            hv,
        ))
    }

    fn own_proposal(&self, msg: &Message) -> Option<Arc<Block>> {
        match msg {
            Message::Proposal { block, .. } if block.proposer() == self.me() => Some(block.clone()),
            _ => None,
        }
    }

    fn equivocate(&mut self, mut fx: Effects) -> Effects {
        let mut sends = Vec::with_capacity(fx.sends.len());
        for (dest, msg) in core::mem::take(&mut fx.sends) {
            let Some(block) = self.own_proposal(&msg) else {
                sends.push((dest, msg));
                continue;
            };
            let mut contents = block.contents().clone();
            contents.payload.extend_from_slice(b"/twin");
            let twin = self.sign(contents);
            self.inner.absorb(&twin);
            let segment = match &*msg {
                Message::Proposal { segment, .. } => segment.clone(),
                _ => Vec::new(),
            };
            let twin_msg = Arc::new(Message::Proposal {
                block: twin.clone(),
                segment,
            });
            let n = self.inner.committee().n();
            for r in self.inner.committee().members() {
                // Self lands in the first half.
                let offset = (r.index() + n - self.me().index()) % n;
                let m = if offset < n / 2 { msg.clone() } else { twin_msg.clone() };
                sends.push((Destination::To(r), m));
            }
            fx.notes.push(Note::Propose {
                block: twin.id(),
                view: twin.view(),
                parent: twin.parent(),
                origin: twin.origin(),
                cnt_tmo: twin.cnt_tmo(),
            });
        }
        fx.sends = sends;
        fx
    }

    fn invalid_then_halt(&mut self, mut fx: Effects, from: View) -> Effects {
        let proposal = fx
            .sends
            .iter()
            .find_map(|(_, m)| self.own_proposal(m))
            .filter(|b| b.view() >= from);
        let Some(honest) = proposal else {
            return fx;
        };
        let committed = self.inner.last_committed().clone();
        // A block whose parent is the committed block's parent conflicts with
        // the committed block.
        if committed.is_genesis() || honest.qc().block() == committed.parent() {
            return fx;
        }
        let mut contents = honest.contents().clone();
        contents.parent = committed.parent();
        let poison = self.sign(contents);
        self.inner.absorb(&poison);
        fx.sends.retain(|(_, m)| self.own_proposal(m).is_none());
        fx.sends.push((
            Destination::All,
            Arc::new(Message::Proposal {
                block: poison.clone(),
                segment: Vec::new(),
            }),
        ));
        let tmo = self.timeout_with(poison.view(), poison.clone());
        fx.sends.push((
            Destination::All,
            Arc::new(Message::Timeout {
                msg: tmo,
                high_qc: self.inner.high_qc().clone(),
                segment: Vec::new(),
            }),
        ));
        fx.notes.retain(|n| !matches!(n, Note::Propose { .. }));
        fx.notes.push(Note::Propose {
            block: poison.id(),
            view: poison.view(),
            parent: poison.parent(),
            origin: poison.origin(),
            cnt_tmo: poison.cnt_tmo(),
        });
        fx.notes.push(Note::Drop {
            reason: "halted",
            block: None,
        });
        fx.timer = None;
        self.halted = true;
        fx
    }

    /// Records an explicitly invalid proposal from a colluder as the block to
    /// extend.
    fn spot_poison(&mut self, input: &Input) {
        let Input::Deliver { from, msg } = input else {
            return;
        };
        let Message::Proposal { block, .. } = &**msg else {
            return;
        };
        if !self.colluders.contains(from) || block.proposer() != *from {
            return;
        }
        self.inner.absorb(block);
        let valid = self
            .inner
            .validator()
            .explicit_valid(block, self.inner.store())
            .unwrap_or(true);
        if !valid && self.poison.as_ref().is_none_or(|p| rank(block, p)) {
            self.poison = Some(block.clone());
        }
    }

    fn extend_poison(&mut self, mut fx: Effects) -> Effects {
        let Some(poison) = self.poison.clone() else {
            return fx;
        };
        let mut reported = false;
        for (_, msg) in fx.sends.iter_mut() {
            if let Message::Timeout { msg: t, .. } = &**msg {
                if t.sender == self.me() && t.view >= poison.view() {
                    let tmo = self.timeout_with(t.view, poison.clone());
                    *msg = Arc::new(Message::Timeout {
                        msg: tmo,
                        high_qc: self.inner.high_qc().clone(),
                        segment: alloc::vec![poison.clone()],
                    });
                    reported = true;
                }
            }
        }
        let view = self.inner.view();
        // Back the colluder immediately so the poisoned view times out quickly.
        if !reported && view == poison.view() && self.reported.insert(view) {
            let tmo = self.timeout_with(view, poison.clone());
            fx.sends.push((
                Destination::All,
                Arc::new(Message::Timeout {
                    msg: tmo,
                    high_qc: self.inner.high_qc().clone(),
                    segment: alloc::vec![poison.clone()],
                }),
            ));
        }
        let leads = self.inner.committee().leader(view) == self.me();
        let enough = self.inner.timeouts_for(view.prev()).count() >= self.inner.committee().quorum();
        if leads && view > poison.view() && enough && !self.extended.contains(&view) {
            if let Some(bad) = self.poisoned_block(view, &poison) {
                self.extended.insert(view);
                fx.sends.retain(|(_, m)| self.own_proposal(m).is_none());
                fx.notes.retain(|n| !matches!(n, Note::Propose { .. }));
                fx.notes.push(Note::Propose {
                    block: bad.id(),
                    view: bad.view(),
                    parent: bad.parent(),
                    origin: bad.origin(),
                    cnt_tmo: bad.cnt_tmo(),
                });
                fx.sends.push((
                    Destination::All,
                    Arc::new(Message::Proposal {
                        block: bad,
                        segment: alloc::vec![poison.clone()],
                    }),
                ));
            }
        }
        if self.extended.contains(&view) {
            let me = self.me();
            fx.sends.retain(|(_, m)| {
                !matches!(&**m, Message::Proposal { block, .. }
                    if block.proposer() == me && block.view() == view && block.parent() != poison.id())
            });
            fx.notes.retain(|n| {
                !matches!(n, Note::Propose { view: v, parent, .. }
                    if *v == view && *parent != poison.id())
            });
        }
        fx
    }

    /// A timeout-justified block at `view` whose parent is `poison`, if enough
    /// timeout messages for the previous view are at hand.
    fn poisoned_block(&mut self, view: View, poison: &Arc<Block>) -> Option<Arc<Block>> {
        let committee = *self.inner.committee();
        let mut msgs: Vec<Arc<TimeoutMsg>> = self.inner.timeouts_for(view.prev()).cloned().collect();
        msgs.sort_by(|a, b| {
            let a_key = (a.high_vote.id() != poison.id(), rank(&a.high_vote, poison));
            let b_key = (b.high_vote.id() != poison.id(), rank(&b.high_vote, poison));
            a_key.cmp(&b_key).then(a.sender.cmp(&b.sender))
        });
        msgs.truncate(committee.quorum());
        let tc = Arc::new(TimeoutCert::new(&committee, msgs).ok()?);
        let qc = self.ancestor_qc(poison)?;
        let contents = BlockContents::by_timeout(
            self.me(),
            view,
            poison.id(),
            qc,
            tc,
            poison.cnt_tmo() + 1,
            alloc::vec![0xBA, 0xD0],
        );
        let block = self.sign(contents);
        self.inner.absorb(&block);
        Some(block)
    }

    /// The highest stored QC that certifies an ancestor of `poison`.
    fn ancestor_qc(&self, poison: &Block) -> Option<Arc<QuorumCert>> {
        let store = self.inner.store();
        let mut chain = BTreeSet::new();
        let mut cur = store.get(poison.parent());
        while let Some(b) = cur {
            chain.insert(b.id());
            if b.is_genesis() {
                break;
            }
            cur = store.get(b.parent());
        }
        store
            .iter()
            .map(|b| b.qc())
            .filter(|qc| chain.contains(&qc.block()))
            .max_by_key(|qc| qc.view())
            .cloned()
    }
}
