//! Scripted adversarial runs with pass/fail property checks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use pbeegees_core::replica::{Note, Protocol, SimTime};
use pbeegees_core::sim::{self, FaultPlan, Horizon, LatencyModel, Script, SimConfig, Trace};
use pbeegees_core::{BlockId, Committee, ReplicaId, SimError, View};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Fig2InvalidBlock,
    HollowChain,
    Equivocation,
    LivenessWindow,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Fig2InvalidBlock,
        Scenario::HollowChain,
        Scenario::Equivocation,
        Scenario::LivenessWindow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2InvalidBlock => "fig2_invalid_block",
            Scenario::HollowChain => "hollow_chain",
            Scenario::Equivocation => "equivocation",
            Scenario::LivenessWindow => "liveness_window",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scenario '{0}' (expected fig2_invalid_block, hollow_chain, equivocation or liveness_window)")]
pub struct UnknownScenario(pub String);

impl FromStr for Scenario {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| UnknownScenario(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub protocol: Protocol,
    pub seed: u64,
    pub pd: u32,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            protocol: Protocol::Pbg,
            seed: 1,
            pd: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub property: &'static str,
    pub upheld: bool,
    pub detail: String,
}

impl Check {
    fn new(property: &'static str, upheld: bool, detail: String) -> Self {
        Check {
            property,
            upheld,
            detail,
        }
    }
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub config: SimConfig,
    pub trace: Trace,
    pub checks: Vec<Check>,
}

impl ScenarioReport {
    pub fn upheld(&self) -> bool {
        self.checks.iter().all(|c| c.upheld)
    }

    pub fn check(&self, property: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.property == property)
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {} vs {} (n={}, seed={})",
            self.scenario.name(),
            self.config.protocol,
            self.config.committee.n(),
            self.config.seed
        )?;
        for c in &self.checks {
            let verdict = if c.upheld { "upheld" } else { "violated" };
            writeln!(f, "  {} {}: {}", c.property, verdict, c.detail)?;
        }
        Ok(())
    }
}

pub fn run_scenario(scenario: Scenario, p: &ScenarioParams) -> Result<ScenarioReport, SimError> {
    let config = match scenario {
        Scenario::Fig2InvalidBlock => fig2_config(p),
        Scenario::HollowChain => hollow_config(p),
        Scenario::Equivocation => equivocation_config(p),
        Scenario::LivenessWindow => liveness_config(p),
    };
    let trace = sim::run(&config)?;
    let mut checks = vec![safety_check(&trace), one_qc_check(&trace)];
    match scenario {
        Scenario::Fig2InvalidBlock | Scenario::Equivocation => {
            let commits = trace.first_commits().len();
            checks.push(Check::new(
                "progress",
                commits > 0,
                format!("{commits} blocks committed"),
            ));
        }
        Scenario::HollowChain => checks.extend(hollow_checks(&config, &trace)),
        Scenario::LivenessWindow => checks.extend(liveness_checks(&config, &trace)),
    }
    Ok(ScenarioReport {
        scenario,
        config,
        trace,
        checks,
    })
}

fn safety_check(trace: &Trace) -> Check {
    let v = trace.safety_violations();
    let detail = match v.first() {
        None => "committed sequences of correct replicas are prefix-compatible".to_string(),
        Some(first) => format!("{} violations, first: {first:?}", v.len()),
    };
    Check::new("safety", v.is_empty(), detail)
}

fn one_qc_check(trace: &Trace) -> Check {
    let c = trace.conflicting_qcs();
    let detail = match c.first() {
        None => "at most one certified block per view".to_string(),
        Some((view, a, b)) => format!("{view} certifies both {a} and {b}"),
    };
    Check::new("one_qc_per_view", c.is_empty(), detail)
}

/// Replica 5 proposes a block conflicting with its last commit and goes
/// silent; replica 6 colludes and extends the invalid block.
pub fn fig2_config(p: &ScenarioParams) -> SimConfig {
    let mut cfg = SimConfig::new(p.protocol, Committee::new(2), p.seed);
    cfg.pd = p.pd;
    cfg.latency = LatencyModel::fixed(100);
    cfg.horizon = Horizon::Views(14);
    cfg.faults
        .byzantine
        .insert(ReplicaId(5), Script::InvalidThenHalt { from: View(5) });
    cfg.faults.byzantine.insert(ReplicaId(6), Script::Extender);
    cfg
}

/// Every other leader slot is skipped for long enough that timeout-built
/// blocks pile up past the prudence degree.
pub fn hollow_config(p: &ScenarioParams) -> SimConfig {
    let mut cfg = SimConfig::new(p.protocol, Committee::new(2), p.seed);
    cfg.pd = p.pd;
    cfg.latency = LatencyModel::fixed(100);
    cfg.uncached_validation = true;
    let stops = 2 * (u64::from(p.pd) + 3);
    cfg.faults.stop_views = (0..stops).map(|i| View(4 + 2 * i)).collect();
    cfg.horizon = Horizon::Views(4 + 2 * stops + 10);
    cfg.record_messages = false;
    cfg
}

fn hollow_checks(cfg: &SimConfig, trace: &Trace) -> Vec<Check> {
    let cnt = trace.max_voted_cnt_tmo();
    let depth = trace.max_validation_depth();
    let pd = cfg.pd;
    vec![
        Check::new(
            "vote_cnt_tmo_bound",
            cnt <= pd,
            format!("max cnt_tmo on a correct vote is {cnt} (pd = {pd})"),
        ),
        Check::new(
            "validation_depth_bound",
            depth <= pd as usize + 1,
            format!("max validation depth is {depth} (bound {})", pd + 1),
        ),
    ]
}

/// Two equivocating leaders under the default latency model and random stops.
pub fn equivocation_config(p: &ScenarioParams) -> SimConfig {
    let mut cfg = SimConfig::new(p.protocol, Committee::new(2), p.seed);
    cfg.pd = p.pd;
    cfg.faults = FaultPlan::with_stop_prob(0.1);
    cfg.faults.byzantine.insert(ReplicaId(1), Script::Equivocate);
    cfg.faults.byzantine.insert(ReplicaId(4), Script::Equivocate);
    cfg.horizon = Horizon::Views(80);
    cfg.record_messages = false;
    cfg
}

/// Heavy jitter until GST at 20 s, random stops and one silent replica.
pub fn liveness_config(p: &ScenarioParams) -> SimConfig {
    let mut cfg = SimConfig::new(p.protocol, Committee::new(2), p.seed);
    cfg.pd = p.pd;
    cfg.latency.gst = 20_000;
    cfg.latency.pre_gst_jitter = 4_000;
    cfg.faults = FaultPlan::with_stop_prob(0.2);
    cfg.faults.byzantine.insert(ReplicaId(3), Script::Silent);
    cfg.horizon = Horizon::Millis(120_000);
    cfg.record_messages = false;
    cfg
}

/// Time by which every message sent before GST has been delivered.
pub fn settle_time(latency: &LatencyModel) -> SimTime {
    latency.gst + latency.base_high.max(latency.spike_ms) + latency.pre_gst_jitter
}

/// Timing bounds measured after the network settles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LivenessReport {
    /// Views whose leader-entry lag was measured.
    pub lag_views: usize,
    pub max_lag: SimTime,
    /// `(view, lag)` for every view whose leader lagged more than `2Δ`.
    pub lag_violations: Vec<(View, SimTime)>,
    /// Correct-view pairs whose commit deadline was checked.
    pub windows: usize,
    /// Windows skipped because the chain from `B_v` to `B_v'` contains a
    /// block at the prudence degree, whose prudent QC cannot justify a commit.
    pub prudent_windows: usize,
    /// Smallest remaining margin before a deadline, over all checked commits.
    pub min_slack: Option<i64>,
    /// `(v, replica, commit time, deadline)` for every missed deadline.
    pub misses: Vec<(View, ReplicaId, Option<SimTime>, SimTime)>,
}

/// A view is correct when its leader is honest and not stop-faulted.
pub fn correct_view(cfg: &SimConfig, v: View) -> bool {
    let leader = cfg.committee.leader(v);
    cfg.faults.is_correct(leader) && !cfg.faults.stopped(cfg.seed, v)
}

pub fn liveness_report(cfg: &SimConfig, trace: &Trace) -> LivenessReport {
    let delta = cfg.latency.delta;
    let settle = settle_time(&cfg.latency);
    let entries = trace.view_entries();
    let first_entry = |v: View| entries.get(&v).and_then(|m| m.values().min().copied());
    let mut report = LivenessReport::default();

    for (view, by_replica) in &entries {
        let first = *by_replica.values().min().expect("non-empty");
        if first < settle {
            continue;
        }
        let leader = cfg.committee.leader(*view);
        let Some(&at) = by_replica.get(&leader) else {
            continue;
        };
        let lag = at - first;
        report.lag_views += 1;
        report.max_lag = report.max_lag.max(lag);
        if lag > 2 * delta {
            report.lag_violations.push((*view, lag));
        }
    }

    let proposals = correct_proposals(cfg, trace);
    let chain: BTreeMap<BlockId, (BlockId, u32)> = trace
        .notes()
        .filter_map(|(_, n)| match n {
            Note::Propose {
                block,
                parent,
                cnt_tmo,
                ..
            } => Some((*block, (*parent, *cnt_tmo))),
            _ => None,
        })
        .collect();
    let last = entries.keys().next_back().copied().unwrap_or(View::GENESIS);
    for (&v, &block) in &proposals {
        if first_entry(v).is_none_or(|t| t < settle) || !correct_view(cfg, v.next()) {
            continue;
        }
        let Some(v2) = (v.0 + 2..last.0)
            .map(View)
            .find(|w| correct_view(cfg, *w) && correct_view(cfg, w.next()))
        else {
            continue;
        };
        let Some(entered) = first_entry(v2.next()) else {
            continue;
        };
        let deadline = entered + delta;
        if deadline > trace.end_time {
            continue;
        }
        if let Some(&later) = proposals.get(&v2) {
            if reaches_prudence(&chain, later, block, cfg.pd) {
                report.prudent_windows += 1;
                continue;
            }
        }
        report.windows += 1;
        for r in &trace.correct {
            let at = trace.commit_time(*r, block);
            match at {
                Some(t) if t <= deadline => {
                    let slack = deadline as i64 - t as i64;
                    report.min_slack = Some(report.min_slack.map_or(slack, |s| s.min(slack)));
                }
                _ => report.misses.push((v, *r, at, deadline)),
            }
        }
    }
    report
}

/// Whether a block with `cnt_tmo == pd` lies on the path from `from` back to
/// `to`, both ends included.
fn reaches_prudence(
    chain: &BTreeMap<BlockId, (BlockId, u32)>,
    from: BlockId,
    to: BlockId,
    pd: u32,
) -> bool {
    let mut cur = from;
    while let Some(&(parent, cnt)) = chain.get(&cur) {
        if cnt == pd {
            return true;
        }
        if cur == to {
            break;
        }
        cur = parent;
    }
    false
}

/// The block each honest, non-stopped leader proposed in its own view.
fn correct_proposals(cfg: &SimConfig, trace: &Trace) -> BTreeMap<View, BlockId> {
    let mut out = BTreeMap::new();
    for (e, note) in trace.correct_notes() {
        if let Note::Propose { block, view, .. } = note {
            if e.replica == cfg.committee.leader(*view) && correct_view(cfg, *view) {
                out.entry(*view).or_insert(*block);
            }
        }
    }
    out
}

fn liveness_checks(cfg: &SimConfig, trace: &Trace) -> Vec<Check> {
    let r = liveness_report(cfg, trace);
    let delta = cfg.latency.delta;
    let late = trace.late_deliveries(cfg.latency.gst, delta);
    vec![
        Check::new(
            "post_gst_delivery_bound",
            late == 0,
            format!("{late} deliveries after GST exceeded {delta} ms"),
        ),
        Check::new(
            "leader_entry_lag",
            r.lag_views > 0 && r.lag_violations.is_empty(),
            format!(
                "{} views measured, max lag {} ms (bound {} ms), {} over",
                r.lag_views,
                r.max_lag,
                2 * delta,
                r.lag_violations.len()
            ),
        ),
        Check::new(
            "commit_within_delta",
            r.windows > 0 && r.misses.is_empty(),
            format!(
                "{} windows checked, {} skipped at the prudence degree, min slack {} ms, {} missed",
                r.windows,
                r.prudent_windows,
                r.min_slack.map_or("n/a".to_string(), |s| s.to_string()),
                r.misses.len()
            ),
        ),
    ]
}
