//! The run trace and the property checks evaluated over it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::Serialize;

use crate::replica::{Note, Protocol, SimTime};
use crate::types::{BlockId, ReplicaId, View};
use crate::validation::ValidationStats;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub time: SimTime,
    pub replica: ReplicaId,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Send {
        to: ReplicaId,
        msg: &'static str,
        view: View,
        deliver_at: SimTime,
    },
    Deliver {
        from: ReplicaId,
        msg: &'static str,
        view: View,
        sent_at: SimTime,
    },
    #[serde(untagged)]
    Protocol(Note),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// A replica committed a block that does not extend its previous commit.
    Fork {
        replica: ReplicaId,
        block: BlockId,
        parent: BlockId,
        previous: BlockId,
    },
    /// Two replicas' committed sequences differ at `index`.
    Divergence {
        a: ReplicaId,
        b: ReplicaId,
        index: usize,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub protocol: Protocol,
    pub seed: u64,
    pub n: usize,
    pub correct: Vec<ReplicaId>,
    pub genesis: BlockId,
    pub end_time: SimTime,
    pub events: Vec<TraceEvent>,
    /// Validation counters per replica, indexed by replica id.
    pub validation: Vec<ValidationStats>,
}

impl Trace {
    pub fn is_correct(&self, r: ReplicaId) -> bool {
        self.correct.contains(&r)
    }

    pub fn notes(&self) -> impl Iterator<Item = (&TraceEvent, &Note)> {
        self.events.iter().filter_map(|e| match &e.event {
            Event::Protocol(n) => Some((e, n)),
            _ => None,
        })
    }

    pub fn correct_notes(&self) -> impl Iterator<Item = (&TraceEvent, &Note)> {
        self.notes().filter(|(e, _)| self.is_correct(e.replica))
    }

    /// Committed `(block, parent)` pairs per correct replica, in commit order.
    pub fn committed(&self) -> BTreeMap<ReplicaId, Vec<(BlockId, BlockId)>> {
        let mut out: BTreeMap<ReplicaId, Vec<(BlockId, BlockId)>> =
            self.correct.iter().map(|r| (*r, Vec::new())).collect();
        for (e, note) in self.correct_notes() {
            if let Note::Commit { block, parent, .. } = note {
                out.entry(e.replica).or_default().push((*block, *parent));
            }
        }
        out
    }

    /// Every commit extends the previous one, and committed sequences of
    /// correct replicas are prefixes of one another.
    pub fn safety_violations(&self) -> Vec<Violation> {
        let committed = self.committed();
        let mut out = Vec::new();
        for (replica, seq) in &committed {
            let mut previous = self.genesis;
            for (block, parent) in seq {
                if *parent != previous {
                    out.push(Violation::Fork {
                        replica: *replica,
                        block: *block,
                        parent: *parent,
                        previous,
                    });
                }
                previous = *block;
            }
        }
        let seqs: Vec<(&ReplicaId, &Vec<(BlockId, BlockId)>)> = committed.iter().collect();
        for (i, (a, sa)) in seqs.iter().enumerate() {
            for (b, sb) in &seqs[i + 1..] {
                if let Some(index) = sa.iter().zip(sb.iter()).position(|(x, y)| x.0 != y.0) {
                    out.push(Violation::Divergence {
                        a: **a,
                        b: **b,
                        index,
                    });
                }
            }
        }
        out
    }

    /// Views in which QCs for two different blocks were formed.
    pub fn conflicting_qcs(&self) -> Vec<(View, BlockId, BlockId)> {
        let mut by_view: BTreeMap<View, BTreeSet<BlockId>> = BTreeMap::new();
        for (_, note) in self.notes() {
            if let Note::QcFormed { view, block, .. } = note {
                by_view.entry(*view).or_default().insert(*block);
            }
        }
        by_view
            .into_iter()
            .filter(|(_, blocks)| blocks.len() > 1)
            .map(|(view, blocks)| {
                let mut it = blocks.into_iter();
                (view, it.next().unwrap(), it.next().unwrap())
            })
            .collect()
    }

    /// Proposal time and view of every proposed block.
    pub fn proposals(&self) -> BTreeMap<BlockId, (SimTime, View)> {
        let mut out = BTreeMap::new();
        for (e, note) in self.notes() {
            if let Note::Propose { block, view, .. } = note {
                out.entry(*block).or_insert((e.time, *view));
            }
        }
        out
    }

    /// Time each block was first committed by a correct replica.
    pub fn first_commits(&self) -> BTreeMap<BlockId, SimTime> {
        let mut out = BTreeMap::new();
        for (e, note) in self.correct_notes() {
            if let Note::Commit { block, .. } = note {
                out.entry(*block).or_insert(e.time);
            }
        }
        out
    }

    /// Time `replica` committed `block`, if it did.
    pub fn commit_time(&self, replica: ReplicaId, block: BlockId) -> Option<SimTime> {
        self.notes().find_map(|(e, note)| match note {
            Note::Commit { block: b, .. } if e.replica == replica && *b == block => Some(e.time),
            _ => None,
        })
    }

    /// Commit latency of every committed block: first correct commit minus
    /// proposal time, ordered by block view.
    pub fn commit_latencies(&self) -> Vec<(View, SimTime)> {
        let proposals = self.proposals();
        let mut out: Vec<(View, SimTime)> = self
            .first_commits()
            .into_iter()
            .filter_map(|(block, at)| {
                let (sent, view) = proposals.get(&block)?;
                Some((*view, at - sent))
            })
            .collect();
        out.sort();
        out
    }

    /// Distinct views for which a correct replica formed a timeout certificate.
    pub fn view_changes(&self) -> usize {
        self.correct_notes()
            .filter_map(|(_, n)| match n {
                Note::TcFormed { view } => Some(*view),
                _ => None,
            })
            .collect::<BTreeSet<View>>()
            .len()
    }

    /// Time each correct replica entered each view.
    pub fn view_entries(&self) -> BTreeMap<View, BTreeMap<ReplicaId, SimTime>> {
        let mut out: BTreeMap<View, BTreeMap<ReplicaId, SimTime>> = BTreeMap::new();
        for (e, note) in self.correct_notes() {
            if let Note::ViewEnter { view, .. } = note {
                out.entry(*view).or_default().entry(e.replica).or_insert(e.time);
            }
        }
        out
    }

    /// Largest timeout count on any block a correct replica voted for.
    pub fn max_voted_cnt_tmo(&self) -> u32 {
        self.correct_notes()
            .filter_map(|(_, n)| match n {
                Note::Vote { cnt_tmo, .. } => Some(*cnt_tmo),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn max_validation_depth(&self) -> usize {
        self.correct
            .iter()
            .filter_map(|r| self.validation.get(r.index()))
            .map(|s| s.max_depth)
            .max()
            .unwrap_or(0)
    }

    /// Sends whose delivery took longer than `bound` although sent at or
    /// after `gst`.
    pub fn late_deliveries(&self, gst: SimTime, bound: u64) -> usize {
        self.events
            .iter()
            .filter(|e| match e.event {
                Event::Deliver { sent_at, .. } => sent_at >= gst && e.time - sent_at > bound,
                _ => false,
            })
            .count()
    }
}
