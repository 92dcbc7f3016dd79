//! View synchronization: timers, timeout messages and timeout certificates.

use alloc::sync::Arc;

use super::{Destination, Effects, Message, Note, Replica, SimTime, Via};
use crate::types::{QuorumCert, TimeoutMsg, View};

impl Replica {
    pub(super) fn start(&mut self, now: SimTime, fx: &mut Effects) {
        if self.view != View::GENESIS {
            return;
        }
        let genesis_qc: Arc<QuorumCert> = self.high_qc.clone();
        self.advance(now, View(1), Via::Qc(View::GENESIS), fx);
        if self.config.committee.leader(View(1)) == self.id {
            let _ = self.propose_by_qc(genesis_qc, fx);
        }
    }

    /// Enters `view` if it is newer than the current one and re-arms the timer.
    pub(super) fn advance(&mut self, now: SimTime, view: View, via: Via, fx: &mut Effects) -> bool {
        if view <= self.view {
            return false;
        }
        self.view = view;
        self.deadline = now + self.config.timeout_for(view);
        fx.timer = Some(self.deadline);
        fx.notes.push(Note::ViewEnter { view, via });
        self.awaiting_tc = None;
        self.collect_garbage();
        true
    }

    fn collect_garbage(&mut self) {
        let keep_from = View(self.view.0.saturating_sub(2));
        self.votes = self.votes.split_off(&(keep_from, crate::types::BlockId::ZERO, crate::types::VoteType::NORMAL));
        self.qcs_formed = self
            .qcs_formed
            .split_off(&(keep_from, crate::types::BlockId::ZERO, crate::types::VoteType::NORMAL));
        self.timeouts = self.timeouts.split_off(&keep_from);
        self.own_timeouts = self.own_timeouts.split_off(&keep_from);
        self.tcs_formed = self.tcs_formed.split_off(&keep_from);
        self.proposed = self.proposed.split_off(&keep_from);
    }

    pub(super) fn on_timer(&mut self, now: SimTime, deadline: SimTime, fx: &mut Effects) {
        if deadline != self.deadline || self.view == View::GENESIS {
            return;
        }
        self.send_timeout(self.view, fx);
        self.deadline = now + self.config.timeout_for(self.view);
        fx.timer = Some(self.deadline);
    }

    /// Broadcasts this replica's timeout message for `view`, reusing the one
    /// already sent if the view timed out before.
    pub(super) fn send_timeout(&mut self, view: View, fx: &mut Effects) {
        let msg = match self.own_timeouts.get(&view) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(TimeoutMsg::new(
                    &self.key,
                    &self.validator.ctx().ring,
                    view,
                    self.high_vote.clone(),
                ));
                self.own_timeouts.insert(view, m.clone());
                m
            }
        };
        fx.notes.push(Note::Timeout {
            view,
            high_vote: msg.high_vote.id(),
        });
        let mut segment = self.segment_for(&[&msg.high_vote]);
        let certified = self.high_qc.block();
        if certified != msg.high_vote.id() && segment.iter().all(|b| b.id() != certified) {
            if let Some(b) = self.store.get(certified) {
                segment.insert(0, b.clone());
            }
        }
        let high_qc = self.high_qc.clone();
        fx.send(
            Destination::All,
            Message::Timeout {
                msg,
                high_qc,
                segment,
            },
        );
    }

    /// Enters the view after `qc` if this replica is behind it.
    pub(super) fn sync_to_qc(&mut self, now: SimTime, qc: &Arc<QuorumCert>, fx: &mut Effects) {
        if qc.view() < self.view {
            return;
        }
        let ctx = self.validator.ctx();
        if !qc.verify(&ctx.committee, &ctx.ring, self.store.genesis()) {
            self.drop_note("bad certificate", None, fx);
            return;
        }
        self.observe_qc(qc);
        let next = qc.view().next();
        self.advance(now, next, Via::Qc(qc.view()), fx);
        if self.config.committee.leader(next) == self.id && self.store.contains(qc.block()) {
            let _ = self.propose_by_qc(qc.clone(), fx);
        }
    }

    pub(super) fn on_timeout_msg(&mut self, now: SimTime, msg: Arc<TimeoutMsg>, fx: &mut Effects) {
        let view = msg.view;
        let late_for_leader = self.awaiting_tc == Some(view.next());
        if view < self.view && !late_for_leader {
            return;
        }
        if !self.config.committee.contains(msg.sender) || !msg.verify(&self.validator.ctx().ring) {
            self.drop_note("bad timeout message", None, fx);
            return;
        }
        self.absorb(&msg.high_vote);
        let bucket = self.timeouts.entry(view).or_default();
        if bucket.contains_key(&msg.sender) {
            return;
        }
        bucket.insert(msg.sender, msg);
        let count = bucket.len();

        if count > self.config.committee.f()
            && view >= self.view
            && !self.own_timeouts.contains_key(&view)
        {
            self.send_timeout(view, fx);
        }
        if count >= self.config.committee.quorum() && view >= self.view && self.tcs_formed.insert(view) {
            fx.notes.push(Note::TcFormed { view });
            let next = view.next();
            self.advance(now, next, Via::Tc(view), fx);
            if self.config.committee.leader(next) == self.id {
                self.propose_by_tc(now, fx);
            }
        } else if late_for_leader {
            self.propose_by_tc(now, fx);
        }
    }
}
