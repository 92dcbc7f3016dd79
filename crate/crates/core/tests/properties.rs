//! Invariants over randomized runs with stop faults and pre-GST jitter.

use std::collections::{BTreeMap, BTreeSet};

use pbeegees_core::replica::{Note, Protocol};
use pbeegees_core::sim::{run, Event, FaultPlan, Horizon, SimConfig};
use pbeegees_core::{Committee, ReplicaId, View};
use proptest::prelude::*;

fn protocol() -> impl Strategy<Value = Protocol> {
    prop::sample::select(vec![
        Protocol::Pbg,
        Protocol::PbgCb,
        Protocol::Fhs,
        Protocol::Chs,
        Protocol::NaiveBeeGees,
    ])
}

prop_compose! {
    fn config()(
        p in protocol(),
        f in 1usize..=2,
        seed in any::<u64>(),
        stop in 0.0f64..0.5,
        gst in prop::option::of(0u64..8_000),
        jitter in 0u64..3_000,
        pd in 1u32..=4,
    ) -> SimConfig {
        let mut cfg = SimConfig::new(p, Committee::new(f), seed);
        cfg.pd = pd;
        cfg.faults = FaultPlan::with_stop_prob(stop);
        if let Some(gst) = gst {
            cfg.latency.gst = gst;
            cfg.latency.pre_gst_jitter = jitter;
        }
        cfg.horizon = Horizon::Views(25);
        cfg
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_config_same_trace(cfg in config()) {
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        prop_assert_eq!(a.events, b.events);
        prop_assert_eq!(a.end_time, b.end_time);
    }

    #[test]
    fn deliveries_follow_their_sends(cfg in config()) {
        let trace = run(&cfg).unwrap();
        let mut last = (0, 0);
        let mut in_flight: BTreeMap<(ReplicaId, ReplicaId, &str, View, u64, u64), usize> = BTreeMap::new();
        for e in &trace.events {
            prop_assert!((e.time, e.seq) > last || e.seq == 0, "event {} out of order", e.seq);
            last = (e.time, e.seq);
            match &e.event {
                Event::Send { to, msg, view, deliver_at } => {
                    prop_assert!(*deliver_at >= e.time);
                    *in_flight.entry((e.replica, *to, *msg, *view, e.time, *deliver_at)).or_default() += 1;
                }
                Event::Deliver { from, msg, view, sent_at } => {
                    let key = (*from, e.replica, *msg, *view, *sent_at, e.time);
                    let n = in_flight.get_mut(&key);
                    prop_assert!(n.as_ref().is_some_and(|n| **n > 0), "delivery without send: {:?}", key);
                    *n.unwrap() -= 1;
                }
                Event::Protocol(_) => {}
            }
        }
    }

    #[test]
    fn post_gst_delays_stay_within_delta(cfg in config()) {
        let trace = run(&cfg).unwrap();
        prop_assert_eq!(trace.late_deliveries(cfg.latency.gst, cfg.latency.delta), 0);
    }

    #[test]
    fn stop_faults_never_break_agreement(cfg in config()) {
        let trace = run(&cfg).unwrap();
        prop_assert!(trace.safety_violations().is_empty(), "{:?}", trace.safety_violations());
        prop_assert!(trace.conflicting_qcs().is_empty());
    }

    #[test]
    fn replicas_move_forward_and_vote_once(cfg in config()) {
        let trace = run(&cfg).unwrap();
        let mut view: BTreeMap<ReplicaId, View> = BTreeMap::new();
        let mut voted: BTreeSet<(ReplicaId, View)> = BTreeSet::new();
        for (e, note) in trace.correct_notes() {
            match note {
                Note::ViewEnter { view: v, .. } => {
                    let prev = view.insert(e.replica, *v);
                    prop_assert!(prev.is_none_or(|p| p < *v), "{} re-entered {}", e.replica, v);
                }
                Note::Vote { view: v, .. } => {
                    prop_assert!(voted.insert((e.replica, *v)), "{} voted twice in {}", e.replica, v);
                    prop_assert_eq!(view.get(&e.replica), Some(v));
                }
                _ => {}
            }
        }
    }

    #[test]
    fn commits_extend_the_previous_commit(cfg in config()) {
        let trace = run(&cfg).unwrap();
        let proposed = trace.proposals();
        for (replica, seq) in trace.committed() {
            let mut prev = trace.genesis;
            for (block, parent) in seq {
                prop_assert_eq!(parent, prev, "{} skipped a block", replica);
                prop_assert!(proposed.contains_key(&block));
                prev = block;
            }
        }
    }
}
