//! Deterministic discrete-event simulation of a committee.
//!
//! Events are processed in `(time, sequence)` order on a single thread. Every
//! message, including a replica's message to itself, is delivered through the
//! network with a delay drawn from the [`LatencyModel`] using the sender's own
//! random stream.

mod adversary;
mod faults;
mod latency;
pub mod rng;
mod trace;

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adversary::{Byzantine, Node};
pub use faults::{FaultPlan, Script};
pub use latency::{sample_latency, LatencyModel};
pub use trace::{Event, Trace, TraceEvent, Violation};

use crate::crypto::generate_keys;
use crate::error::SimError;
use crate::replica::{
    Destination, Input, Message, Note, Protocol, ProtocolConfig, Replica, SimTime, StopSchedule,
};
use crate::types::{Block, Committee, ReplicaId, View};
use crate::validation::{ValidationContext, Validator};

/// When a run ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Stop once a correct replica enters the view after this one.
    Views(u64),
    /// Stop at this simulated time.
    Millis(SimTime),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub committee: Committee,
    pub pd: u32,
    pub latency: LatencyModel,
    pub faults: FaultPlan,
    pub seed: u64,
    pub horizon: Horizon,
    /// View timer; defaults to five times the delivery bound.
    pub timeout_ms: Option<u64>,
    /// Fail with `HorizonExceeded` after this long without a correct replica
    /// entering a view or committing. Defaults to twenty view timers.
    pub guard_ms: Option<u64>,
    /// Record every send and delivery, not only protocol events.
    pub record_messages: bool,
    /// Recompute validation verdicts instead of caching them per block.
    pub uncached_validation: bool,
}

impl SimConfig {
    pub fn new(protocol: Protocol, committee: Committee, seed: u64) -> Self {
        SimConfig {
            protocol,
            committee,
            pd: 3,
            latency: LatencyModel::default(),
            faults: FaultPlan::none(),
            seed,
            horizon: Horizon::Views(100),
            timeout_ms: None,
            guard_ms: None,
            record_messages: true,
            uncached_validation: false,
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let mut cfg = ProtocolConfig::new(self.committee, self.pd, self.latency.delta);
        if let Some(t) = self.timeout_ms {
            cfg.timeout_ms = t;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.latency.validate().map_err(SimError::Config)?;
        self.faults.validate(&self.committee).map_err(SimError::Config)?;
        if self.timeout_ms == Some(0) {
            return Err(SimError::Config("timeout must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Pending {
    Deliver {
        to: ReplicaId,
        from: ReplicaId,
        sent_at: SimTime,
        msg: Arc<Message>,
    },
    Timer {
        to: ReplicaId,
        deadline: SimTime,
    },
}

#[derive(Debug)]
struct Scheduled {
    time: SimTime,
    seq: u64,
    event: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Builds the committee for `cfg`: honest replicas plus scripted byzantine ones.
pub fn build_nodes(cfg: &SimConfig) -> Vec<Node> {
    let (ring, keys) = generate_keys(cfg.committee.n(), cfg.seed);
    let genesis = Block::genesis();
    let pcfg = cfg.protocol_config();
    let plan = Arc::new(cfg.faults.clone());
    let seed = cfg.seed;
    let stops: StopSchedule = {
        let plan = plan.clone();
        Arc::new(move |v: View| plan.stopped(seed, v))
    };
    let colluders: BTreeSet<ReplicaId> = cfg.faults.byzantine.keys().copied().collect();
    keys.into_iter()
        .map(|key| {
            let id = key.replica();
            let mut replica = Replica::new(key, cfg.protocol, pcfg, ring.clone(), genesis.clone());
            if cfg.uncached_validation {
                let ctx = ValidationContext {
                    committee: cfg.committee,
                    ring: ring.clone(),
                    rank_mode: cfg.protocol.rank_mode(cfg.committee.f()),
                    pd: cfg.pd,
                };
                replica = replica.with_validator(Validator::uncached(ctx));
            }
            match cfg.faults.byzantine.get(&id) {
                None => Node::Honest(replica.with_stop_schedule(stops.clone())),
                Some(script) => {
                    let schedule: StopSchedule = if *script == Script::HollowInducer {
                        Arc::new(|_| true)
                    } else {
                        stops.clone()
                    };
                    Node::Byzantine(Byzantine::new(
                        replica.with_stop_schedule(schedule),
                        *script,
                        colluders.clone(),
                    ))
                }
            }
        })
        .collect()
}

struct World {
    cfg: SimConfig,
    nodes: Vec<Node>,
    rngs: Vec<ChaCha8Rng>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    events: Vec<TraceEvent>,
    last_progress: SimTime,
    max_view: View,
}

impl World {
    fn push(&mut self, time: SimTime, event: Pending) {
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            time,
            seq: self.seq,
            event,
        }));
    }

    fn record(&mut self, time: SimTime, replica: ReplicaId, event: Event) {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            time,
            replica,
            event,
        });
    }

    fn step(&mut self, now: SimTime, who: ReplicaId, input: Input) {
        let fx = self.nodes[who.index()].handle(now, input);
        let correct = self.nodes[who.index()].is_correct();
        for note in fx.notes {
            if correct {
                match note {
                    Note::ViewEnter { view, .. } => {
                        self.last_progress = now;
                        self.max_view = self.max_view.max(view);
                    }
                    Note::Commit { .. } => self.last_progress = now,
                    _ => {}
                }
            }
            self.record(now, who, Event::Protocol(note));
        }
        if let Some(deadline) = fx.timer {
            self.push(deadline, Pending::Timer { to: who, deadline });
        }
        for (dest, msg) in fx.sends {
            let targets: Vec<ReplicaId> = match dest {
                Destination::To(r) => alloc::vec![r],
                Destination::All => self.cfg.committee.members().collect(),
            };
            for to in targets {
                if !self.cfg.committee.contains(to) {
                    continue;
                }
                let delay = sample_latency(&self.cfg.latency, &mut self.rngs[who.index()], now);
                let at = now + delay;
                if self.cfg.record_messages {
                    self.record(
                        now,
                        who,
                        Event::Send {
                            to,
                            msg: msg.kind(),
                            view: msg.view(),
                            deliver_at: at,
                        },
                    );
                }
                self.push(
                    at,
                    Pending::Deliver {
                        to,
                        from: who,
                        sent_at: now,
                        msg: msg.clone(),
                    },
                );
            }
        }
    }
}

/// Runs one simulation to its horizon and returns the trace.
pub fn run(cfg: &SimConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let nodes = build_nodes(cfg);
    run_nodes(cfg, nodes)
}

/// Runs a simulation over caller-built nodes, which must match the committee.
pub fn run_nodes(cfg: &SimConfig, nodes: Vec<Node>) -> Result<Trace, SimError> {
    if nodes.len() != cfg.committee.n() {
        return Err(SimError::Config("node count does not match the committee"));
    }
    let protocol_cfg = cfg.protocol_config();
    let guard = cfg.guard_ms.unwrap_or(20 * protocol_cfg.timeout_ms);
    let rngs = (0..nodes.len())
        .map(|i| rng::stream(cfg.seed, "latency", i as u64))
        .collect();
    let correct: Vec<ReplicaId> = nodes
        .iter()
        .filter(|n| n.is_correct())
        .map(|n| n.replica().id())
        .collect();
    let genesis = nodes[0].replica().store().genesis();
    let mut world = World {
        cfg: cfg.clone(),
        nodes,
        rngs,
        queue: BinaryHeap::new(),
        seq: 0,
        events: Vec::new(),
        last_progress: 0,
        max_view: View::GENESIS,
    };
    for i in 0..world.nodes.len() {
        world.step(0, ReplicaId(i as u32), Input::Start);
    }
    let mut now = 0;
    let mut failure = None;
    while let Some(Reverse(next)) = world.queue.pop() {
        if let Horizon::Millis(limit) = cfg.horizon {
            if next.time > limit {
                now = limit;
                break;
            }
        }
        now = next.time;
        if now.saturating_sub(world.last_progress) > guard {
            failure = Some(SimError::HorizonExceeded {
                at_ms: now,
                window_ms: guard,
            });
            break;
        }
        match next.event {
            Pending::Timer { to, deadline } => world.step(now, to, Input::Timer { deadline }),
            Pending::Deliver {
                to,
                from,
                sent_at,
                msg,
            } => {
                if cfg.record_messages {
                    world.record(
                        now,
                        to,
                        Event::Deliver {
                            from,
                            msg: msg.kind(),
                            view: msg.view(),
                            sent_at,
                        },
                    );
                }
                world.step(now, to, Input::Deliver { from, msg });
            }
        }
        if let Horizon::Views(limit) = cfg.horizon {
            if world.max_view.0 > limit {
                break;
            }
        }
    }
    if let Some(err) = failure {
        return Err(err);
    }
    let validation = world
        .nodes
        .iter()
        .map(|n| n.replica().validation_stats())
        .collect();
    Ok(Trace {
        protocol: cfg.protocol,
        seed: cfg.seed,
        n: cfg.committee.n(),
        correct,
        genesis,
        end_time: now,
        events: world.events,
        validation,
    })
}
