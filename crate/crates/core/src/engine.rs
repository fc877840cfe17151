//! Online phase: bring a constellation up on a backend, then apply trace
//! diffs on a wall-clock schedule and report how late each step landed.
//!
//! Within one step, operations are issued in four phases: link removals,
//! node transitions, link additions, property updates. Each phase fans out
//! over a worker pool; a link appears at most once per diff, so per-link
//! ordering is preserved across phases and steps.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendError};
use crate::error::{Error, Result};
use crate::topology::{Constellation, LinkKey, LinkProps, NodeId, NodeState, TopologySnapshot};
use crate::trace::{apply, diff, StepDiff, TraceFile};

/// Software image per node. Opaque to the engine; backends interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfiles {
    pub satellite: String,
    pub ground_station: String,
    #[serde(default)]
    pub overrides: BTreeMap<NodeId, String>,
}

impl Default for NodeProfiles {
    fn default() -> Self {
        NodeProfiles {
            satellite: "satellite".into(),
            ground_station: "ground-station".into(),
            overrides: BTreeMap::new(),
        }
    }
}

impl NodeProfiles {
    pub fn for_node(&self, n: &NodeId) -> &str {
        if let Some(p) = self.overrides.get(n) {
            return p;
        }
        if n.is_ground() {
            &self.ground_station
        } else {
            &self.satellite
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BringUpReport {
    pub node_phase_s: f64,
    pub network_phase_s: f64,
    pub node_count: usize,
    pub link_count: usize,
}

/// Bring-up that stopped part way; `partial` says what exists on the backend.
#[derive(Debug)]
pub struct BringUpFailure {
    pub partial: BringUpReport,
    pub error: Error,
}

impl From<BringUpFailure> for Error {
    fn from(f: BringUpFailure) -> Self {
        f.error
    }
}

/// Timing of one applied step. Wall times are seconds since the run began.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step_index: u64,
    pub scheduled_wall_s: f64,
    pub apply_start_wall_s: f64,
    pub apply_end_wall_s: f64,
    /// `apply_end - scheduled`; 0 when running unpaced.
    pub lag_ms: f64,
    pub ops_applied: usize,
    /// Time spent computing the step's state at run time (online mode only).
    #[serde(default)]
    pub compute_ms: f64,
}

/// How simulated time maps onto wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pace {
    /// Steps are applied back to back.
    Unpaced,
    /// One simulated second takes `1/factor` wall seconds.
    Realtime(f64),
}

impl Pace {
    pub fn from_factor(r: f64) -> Result<Self> {
        if r.is_infinite() && r > 0.0 {
            Ok(Pace::Unpaced)
        } else if r > 0.0 && r.is_finite() {
            Ok(Pace::Realtime(r))
        } else {
            Err(Error::config(format!("realtime factor {r} must be positive")))
        }
    }

    fn slot(&self, step_ms: u64) -> Option<Duration> {
        match self {
            Pace::Unpaced => None,
            Pace::Realtime(r) => Some(Duration::from_secs_f64(step_ms as f64 / 1000.0 / r)),
        }
    }
}

/// Drives one backend. Tracks the node states it has applied so a diff's
/// target state can be turned into the right lifecycle call.
pub struct Engine<'b> {
    backend: &'b dyn Backend,
    profiles: NodeProfiles,
    pool: Option<rayon::ThreadPool>,
    states: BTreeMap<NodeId, NodeState>,
}

fn wrap(step: u64) -> impl Fn(BackendError) -> Error {
    move |source| Error::Backend { step, source }
}

impl<'b> Engine<'b> {
    pub fn new(backend: &'b dyn Backend, profiles: NodeProfiles, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Engine { backend, profiles, pool, states: BTreeMap::new() })
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend
    }

    /// Creates and starts the step-0 nodes (suspended ones are only
    /// created), then adds the step-0 links. The two phases are timed
    /// separately and never overlap.
    pub fn bring_up(&mut self, trace: &TraceFile) -> std::result::Result<BringUpReport, BringUpFailure> {
        let mut rep = BringUpReport::default();
        if !self.backend.nodes().is_empty() || !self.backend.links().is_empty() {
            return Err(BringUpFailure { partial: rep, error: Error::config("backend is not empty") });
        }
        let Some(first) = trace.diffs.first() else {
            return Ok(rep);
        };
        let fail = |rep: BringUpReport, e: BackendError| BringUpFailure { partial: rep, error: wrap(0)(e) };

        let t = Instant::now();
        for (n, st) in &first.node_transitions {
            if let Err(e) = self.backend.create_node(*n, self.profiles.for_node(n)) {
                rep.node_phase_s = t.elapsed().as_secs_f64();
                return Err(fail(rep, e));
            }
            self.states.insert(*n, NodeState::Created);
            rep.node_count += 1;
            if *st == NodeState::Started {
                if let Err(e) = self.backend.start_node(*n) {
                    rep.node_phase_s = t.elapsed().as_secs_f64();
                    return Err(fail(rep, e));
                }
                self.states.insert(*n, NodeState::Started);
            }
        }
        rep.node_phase_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        for (k, p) in first.links_added.iter().chain(&first.props_changed) {
            if let Err(e) = self.backend.add_link(*k, p) {
                rep.network_phase_s = t.elapsed().as_secs_f64();
                return Err(fail(rep, e));
            }
            rep.link_count += 1;
        }
        rep.network_phase_s = t.elapsed().as_secs_f64();
        Ok(rep)
    }

    fn fan_out<T: Sync>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> std::result::Result<(), BackendError> + Sync,
    ) -> std::result::Result<(), BackendError> {
        match &self.pool {
            Some(pool) if items.len() > 1 => pool.install(|| items.par_iter().try_for_each(&f)),
            _ => items.iter().try_for_each(f),
        }
    }

    /// Applies one diff and returns the number of diff entries applied.
    pub fn apply_diff(&mut self, d: &StepDiff) -> Result<usize> {
        let b = self.backend;
        let err = wrap(d.step_index);
        self.fan_out(&d.links_removed, |k| b.remove_link(*k)).map_err(&err)?;

        let current: Vec<(NodeId, Option<NodeState>, NodeState)> =
            d.node_transitions.iter().map(|(n, to)| (*n, self.states.get(n).copied(), *to)).collect();
        let reached = Mutex::new(Vec::with_capacity(current.len()));
        let profiles = &self.profiles;
        self.fan_out(&current, |(n, from, to)| {
            let now = node_transition(b, profiles, *n, *from, *to)?;
            reached.lock().unwrap().push((*n, now));
            Ok(())
        })
        .map_err(&err)?;
        for (n, s) in reached.into_inner().unwrap() {
            self.states.insert(n, s);
        }

        self.fan_out(&d.links_added, |(k, p)| b.add_link(*k, p)).map_err(&err)?;
        self.fan_out(&d.props_changed, |(k, p)| b.update_link(*k, p)).map_err(&err)?;
        Ok(d.len())
    }

    /// Applies diffs `1..` on schedule: diff `k` is due `k·step/r` after
    /// the run starts. Late steps are applied late, never skipped.
    pub fn run(&mut self, trace: &TraceFile, pace: Pace) -> Result<Vec<StepReport>> {
        self.run_with(trace, pace, |_| {})
    }

    pub fn run_with(
        &mut self,
        trace: &TraceFile,
        pace: Pace,
        mut on_step: impl FnMut(&StepReport),
    ) -> Result<Vec<StepReport>> {
        let slot = pace.slot(trace.step_ms());
        let t0 = Instant::now();
        let mut reports = Vec::with_capacity(trace.diffs.len().saturating_sub(1));
        for d in trace.diffs.iter().skip(1) {
            let scheduled = wait_for_slot(t0, slot, d.step_index);
            let start = t0.elapsed();
            let ops = self.apply_diff(d)?;
            let end = t0.elapsed();
            let r = report(d.step_index, scheduled, start, end, slot.is_some(), ops, 0.0);
            on_step(&r);
            reports.push(r);
        }
        Ok(reports)
    }

    /// Runtime-computed mode: each step's topology is evaluated when its
    /// slot arrives instead of being read from a trace. Assumes the engine
    /// was brought up from step 0 of the same scenario.
    pub fn run_online(&mut self, constellation: &Constellation, steps: u64, pace: Pace) -> Result<Vec<StepReport>> {
        let sc = constellation.scenario();
        let slot = pace.slot(sc.step_ms());
        let t0 = Instant::now();
        let mut stored: TopologySnapshot = constellation.snapshot(sc.instant(0));
        let mut gsl: Vec<_> = (0..sc.ground_stations.len()).map(|g| stored.gsl_of(g as u16)).collect();
        let mut reports = Vec::new();
        for k in 1..=steps {
            let scheduled = wait_for_slot(t0, slot, k);
            let start = t0.elapsed();
            let frame = constellation.frame(sc.instant(k));
            gsl = constellation.choose_gsls(&frame, &gsl);
            let snap = constellation.assemble(&frame, &gsl);
            let mut d = diff(&stored, &snap, sc.delay_quantum_us);
            d.step_index = k;
            apply(&mut stored, &d)?;
            let compute_ms = (t0.elapsed() - start).as_secs_f64() * 1e3;
            let ops = self.apply_diff(&d)?;
            let end = t0.elapsed();
            reports.push(report(k, scheduled, start, end, slot.is_some(), ops, compute_ms));
        }
        Ok(reports)
    }
}

fn wait_for_slot(t0: Instant, slot: Option<Duration>, k: u64) -> Duration {
    let Some(slot) = slot else {
        return t0.elapsed();
    };
    let due = slot.mul_f64(k as f64);
    let now = t0.elapsed();
    if due > now {
        thread::sleep(due - now);
    }
    due
}

fn report(
    k: u64,
    scheduled: Duration,
    start: Duration,
    end: Duration,
    paced: bool,
    ops: usize,
    compute_ms: f64,
) -> StepReport {
    StepReport {
        step_index: k,
        scheduled_wall_s: scheduled.as_secs_f64(),
        apply_start_wall_s: start.as_secs_f64(),
        apply_end_wall_s: end.as_secs_f64(),
        lag_ms: if paced { end.saturating_sub(scheduled).as_secs_f64() * 1e3 } else { 0.0 },
        ops_applied: ops,
        compute_ms,
    }
}

fn node_transition(
    b: &dyn Backend,
    profiles: &NodeProfiles,
    n: NodeId,
    from: Option<NodeState>,
    to: NodeState,
) -> std::result::Result<NodeState, BackendError> {
    use NodeState::*;
    let from = match from {
        Some(s) => s,
        None => {
            b.create_node(n, profiles.for_node(&n))?;
            Created
        }
    };
    match (from, to) {
        (Created, Started) => b.start_node(n).map(|_| Started),
        (Suspended, Started) => b.resume_node(n).map(|_| Started),
        (Started, Suspended) => b.suspend_node(n).map(|_| Suspended),
        (s, Suspended) if s != Started => Ok(s),
        (s, Created) => Ok(s),
        (s, _) => Ok(s),
    }
}

/// Creates and starts every step-0 node, then adds every step-0 link.
pub fn bring_up(
    trace: &TraceFile,
    backend: &dyn Backend,
    profiles: &NodeProfiles,
) -> std::result::Result<BringUpReport, BringUpFailure> {
    Engine::new(backend, profiles.clone(), 1)
        .map_err(|error| BringUpFailure { partial: BringUpReport::default(), error })?
        .bring_up(trace)
}

/// Removes every link, then every node. Keeps going past failures and
/// reports them together. Returns the number of objects removed.
pub fn tear_down(backend: &dyn Backend) -> Result<usize> {
    let mut failures = Vec::new();
    let mut removed = 0;
    for k in backend.links() {
        match backend.remove_link(k) {
            Ok(()) => removed += 1,
            Err(e) => failures.push(e.to_string()),
        }
    }
    for n in backend.nodes() {
        match backend.destroy_node(n) {
            Ok(()) => removed += 1,
            Err(e) => failures.push(e.to_string()),
        }
    }
    if failures.is_empty() {
        Ok(removed)
    } else {
        Err(Error::TearDown(failures))
    }
}

/// Nearest-rank percentile (`p` in `(0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Links and their current properties as recorded on a backend, for
/// reconciliation checks against a snapshot.
pub fn expected_links(s: &TopologySnapshot) -> BTreeMap<LinkKey, LinkProps> {
    s.links().map(|(k, p)| (*k, *p)).collect()
}
