//! Leader-side block construction.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Destination, Effects, Message, Note, Protocol, Replica, SimTime};
use crate::error::ReplicaError;
use crate::types::{Block, BlockContents, QuorumCert, TimeoutCert, TimeoutMsg, View};

/// Parent and timeout set chosen for a timeout-justified block.
pub(super) struct TcPlan {
    pub parent: Arc<Block>,
    pub qc: Arc<QuorumCert>,
    pub tmo_set: Vec<Arc<TimeoutMsg>>,
}

impl Replica {
    fn leader_check(&self, cert_view: View) -> Result<View, ReplicaError> {
        let view = self.view;
        let leader = self.config.committee.leader(view);
        if leader != self.id {
            return Err(ReplicaError::NotLeader {
                me: self.id,
                view,
                leader,
            });
        }
        if cert_view.next() != view {
            return Err(ReplicaError::StaleCertificate {
                cert: cert_view,
                view,
            });
        }
        Ok(view)
    }

    /// Returns false if the slot was already used or is stop-faulted.
    fn claim_slot(&mut self, view: View, fx: &mut Effects) -> bool {
        if self.proposed.contains(&view) {
            return false;
        }
        if self.stop.as_ref().is_some_and(|stop| stop(view)) {
            self.proposed.insert(view);
            self.drop_note("leader stopped", None, fx);
            return false;
        }
        true
    }

    fn payload(&self, view: View) -> Vec<u8> {
        let mut out = Vec::with_capacity(12);
        out.extend_from_slice(&self.id.0.to_be_bytes());
        out.extend_from_slice(&view.0.to_be_bytes());
        out
    }

    fn publish(&mut self, block: Block, fx: &mut Effects) {
        let block = Arc::new(block);
        self.absorb(&block);
        self.proposed.insert(block.view());
        self.awaiting_tc = None;
        let mut starts: Vec<&Block> = alloc::vec![&block];
        if let Some(set) = block.tmo_set() {
            starts.extend(set.iter().map(|m| &*m.high_vote));
        }
        let segment = self.segment_for(&starts);
        fx.notes.push(Note::Propose {
            block: block.id(),
            view: block.view(),
            parent: block.parent(),
            origin: block.origin(),
            cnt_tmo: block.cnt_tmo(),
        });
        fx.send(Destination::All, Message::Proposal { block, segment });
    }

    /// Proposes a block extending the block certified by `qc`, which must be
    /// from the view just before the current one.
    pub fn propose_by_qc(
        &mut self,
        qc: Arc<QuorumCert>,
        fx: &mut Effects,
    ) -> Result<(), ReplicaError> {
        let view = self.leader_check(qc.view())?;
        if !self.claim_slot(view, fx) {
            return Ok(());
        }
        let contents = BlockContents::by_votes(self.id, view, qc, self.payload(view));
        let block = Block::new(contents, &self.key, &self.validator.ctx().ring);
        self.publish(block, fx);
        Ok(())
    }

    /// Proposes after a timeout of the previous view using the timeout
    /// messages collected so far. Waits for more messages if they are needed.
    pub(super) fn propose_by_tc(&mut self, _now: SimTime, fx: &mut Effects) {
        let Ok(view) = self.leader_check(self.view.prev()) else {
            return;
        };
        if self.proposed.contains(&view) {
            return;
        }
        let msgs: Vec<Arc<TimeoutMsg>> = self.timeouts_for(view.prev()).cloned().collect();
        match self.plan_tc_proposal(&msgs) {
            Ok(plan) => {
                if self.claim_slot(view, fx) {
                    let _ = self.build_tc_block(view, plan, fx);
                }
            }
            Err(ReplicaError::NoValidParent) => {
                fx.notes.push(Note::NoValidParent { view });
                if let Some(plan) = self.fallback_plan(&msgs) {
                    if self.claim_slot(view, fx) {
                        let _ = self.build_tc_block(view, plan, fx);
                    }
                }
            }
            Err(_) => self.awaiting_tc = Some(view),
        }
    }

    fn build_tc_block(
        &mut self,
        view: View,
        plan: TcPlan,
        fx: &mut Effects,
    ) -> Result<(), ReplicaError> {
        let tc = Arc::new(TimeoutCert::new(&self.config.committee, plan.tmo_set)?);
        let cnt = plan.parent.cnt_tmo().saturating_add(1);
        let contents = BlockContents::by_timeout(
            self.id,
            view,
            plan.parent.id(),
            plan.qc,
            tc,
            cnt,
            self.payload(view),
        );
        let block = Block::new(contents, &self.key, &self.validator.ctx().ring);
        self.publish(block, fx);
        Ok(())
    }

    /// Chooses the parent and timeout set for a timeout-justified proposal.
    pub(super) fn plan_tc_proposal(
        &mut self,
        msgs: &[Arc<TimeoutMsg>],
    ) -> Result<TcPlan, ReplicaError> {
        let need = self.config.committee.quorum();
        if msgs.len() < need {
            return Err(ReplicaError::AwaitingTimeouts {
                have: msgs.len(),
                need,
            });
        }
        match self.protocol {
            Protocol::Pbg | Protocol::PbgCb => self.plan_prudent(msgs),
            Protocol::NaiveBeeGees => {
                let parent = self.ordered_candidates(msgs).remove(0);
                let tmo_set = self.arrange(&parent, msgs, false);
                Ok(TcPlan {
                    qc: parent.qc().clone(),
                    parent,
                    tmo_set,
                })
            }
            Protocol::Fhs | Protocol::Chs => {
                let mut qc = self.high_qc.clone();
                for m in msgs {
                    if m.high_vote.qc().view() > qc.view() {
                        qc = m.high_vote.qc().clone();
                    }
                }
                let parent = self.store.block(qc.block())?.clone();
                let mut tmo_set: Vec<_> = msgs.to_vec();
                tmo_set.sort_by_key(|m| m.sender);
                tmo_set.truncate(need);
                Ok(TcPlan {
                    parent,
                    qc,
                    tmo_set,
                })
            }
        }
    }

    /// Distinct high-vote blocks, most preferred first.
    fn ordered_candidates(&self, msgs: &[Arc<TimeoutMsg>]) -> Vec<Arc<Block>> {
        let mode = self.validator.ctx().rank_mode;
        let mut seen = BTreeSet::new();
        let mut out: Vec<Arc<Block>> = msgs
            .iter()
            .filter(|m| seen.insert(m.high_vote.id()))
            .map(|m| m.high_vote.clone())
            .collect();
        out.sort_by(|a, b| mode.preference(b, a, msgs));
        out
    }

    /// Orders messages as parent supporters, then strictly lower ranked, then
    /// ties, and keeps a quorum. With `strict`, messages outranking the parent
    /// are excluded.
    fn arrange(&self, parent: &Block, msgs: &[Arc<TimeoutMsg>], strict: bool) -> Vec<Arc<TimeoutMsg>> {
        let mode = self.validator.ctx().rank_mode;
        let class = |m: &Arc<TimeoutMsg>| -> u8 {
            if m.high_vote.id() == parent.id() {
                0
            } else {
                match mode.preference(&m.high_vote, parent, msgs) {
                    Ordering::Less => {
                        if mode.outranks(parent, &m.high_vote, msgs) {
                            1
                        } else {
                            2
                        }
                    }
                    _ if mode.outranks(&m.high_vote, parent, msgs) => 3,
                    _ => 2,
                }
            }
        };
        let mut ranked: Vec<(u8, Arc<TimeoutMsg>)> = msgs
            .iter()
            .map(|m| (class(m), m.clone()))
            .filter(|(c, _)| !strict || *c < 3)
            .collect();
        ranked.sort_by_key(|(c, m)| (*c, m.sender));
        ranked
            .into_iter()
            .take(self.config.committee.quorum())
            .map(|(_, m)| m)
            .collect()
    }

    fn plan_prudent(&mut self, msgs: &[Arc<TimeoutMsg>]) -> Result<TcPlan, ReplicaError> {
        let need = self.config.committee.quorum();
        let pd = self.config.pd;
        let mut any_usable = false;
        let mut best_have = 0;
        for cand in self.ordered_candidates(msgs) {
            if cand.cnt_tmo() >= pd {
                continue;
            }
            match self.validator.valid_chain(&cand, &self.store) {
                Ok(r) if r.is_valid() => {}
                _ => continue,
            }
            any_usable = true;
            let tmo_set = self.arrange(&cand, msgs, true);
            best_have = best_have.max(tmo_set.len());
            if tmo_set.len() < need {
                continue;
            }
            // In vote-count mode the ranking depends on the chosen subset.
            let mode = self.validator.ctx().rank_mode;
            let in_set = tmo_set.iter().any(|m| m.high_vote.id() == cand.id());
            let outranked = tmo_set
                .iter()
                .any(|m| mode.outranks(&m.high_vote, &cand, &tmo_set));
            if in_set && !outranked {
                return Ok(TcPlan {
                    qc: cand.qc().clone(),
                    parent: cand,
                    tmo_set,
                });
            }
        }
        if any_usable {
            Err(ReplicaError::AwaitingTimeouts {
                have: best_have,
                need,
            })
        } else {
            Err(ReplicaError::NoValidParent)
        }
    }

    /// Extends the highest certified block named by the timeout set when no
    /// candidate is usable. Correct replicas reject the result unless it
    /// happens to be valid; the leader still makes the attempt.
    fn fallback_plan(&self, msgs: &[Arc<TimeoutMsg>]) -> Option<TcPlan> {
        let qc = msgs
            .iter()
            .map(|m| m.high_vote.qc().clone())
            .max_by(|a, b| a.view().cmp(&b.view()).then(b.block().cmp(&a.block())))?;
        let parent = self.store.get(qc.block())?.clone();
        let tmo_set = self.arrange(&parent, msgs, false);
        Some(TcPlan {
            parent,
            qc,
            tmo_set,
        })
    }
}
