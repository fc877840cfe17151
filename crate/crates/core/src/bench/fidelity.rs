//! Runs a measurement plan against a simulated network that is kept in
//! step with a trace, and logs ground-station handovers as they happen.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::presets::MeasurementPlan;
use crate::backends::{
    sim_ping, sim_throughput_sessions, Direction, GraphSource, MeasurementRecord, NetGraph, PingParams,
    SimulatedBackend, ThroughputSession, TopologyMode, DEFAULT_PER_HOP_PROCESSING_US,
};
use crate::engine::{Engine, NodeProfiles};
use crate::error::{Error, Result};
use crate::orbits::SatelliteId;
use crate::topology::{NodeId, Scenario};
use crate::trace::{StepDiff, TraceFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverEvent {
    pub t_offset_s: f64,
    pub ground_station: NodeId,
    pub from: Option<SatelliteId>,
    pub to: Option<SatelliteId>,
}

fn gsl_sat(gs: NodeId, key: &crate::topology::LinkKey) -> Option<SatelliteId> {
    match key.other(gs) {
        NodeId::Sat(s) if key.a() == gs || key.b() == gs => Some(s),
        _ => None,
    }
}

/// GSL changes carried by one diff, one event per affected station.
pub fn handovers_in(d: &StepDiff, step_s: f64) -> Vec<HandoverEvent> {
    let mut stations: Vec<NodeId> = d
        .links_removed
        .iter()
        .chain(d.links_added.iter().map(|(k, _)| k))
        .filter(|k| k.is_gsl())
        .map(|k| k.a())
        .collect();
    stations.sort();
    stations.dedup();
    stations
        .into_iter()
        .map(|gs| HandoverEvent {
            t_offset_s: d.step_index as f64 * step_s,
            ground_station: gs,
            from: d.links_removed.iter().find_map(|k| gsl_sat(gs, k)),
            to: d.links_added.iter().find_map(|(k, _)| gsl_sat(gs, k)),
        })
        .collect()
}

/// Every handover in a trace; step 0 is the initial assignment, not a handover.
pub fn trace_handovers(trace: &TraceFile) -> Vec<HandoverEvent> {
    let step_s = trace.step_ms() as f64 / 1000.0;
    trace.diffs.iter().skip(1).flat_map(|d| handovers_in(d, step_s)).collect()
}

/// [`GraphSource`] that lazily applies trace diffs to a simulated backend
/// so a measurement at `t` sees the topology of step `floor(t / step)`.
pub struct TraceDriver<'a> {
    engine: Engine<'a>,
    sim: &'a SimulatedBackend,
    trace: &'a TraceFile,
    applied: u64,
    handovers: Vec<HandoverEvent>,
    failure: Option<Error>,
}

impl<'a> TraceDriver<'a> {
    pub fn new(sim: &'a SimulatedBackend, trace: &'a TraceFile) -> Result<Self> {
        let mut engine = Engine::new(sim, NodeProfiles::default(), 1)?;
        engine.bring_up(trace)?;
        Ok(TraceDriver { engine, sim, trace, applied: 0, handovers: Vec::new(), failure: None })
    }

    pub fn advance_to(&mut self, t_offset_s: f64) -> Result<()> {
        let step_ms = self.trace.step_ms();
        let last = self.trace.diffs.len().saturating_sub(1) as u64;
        let target = ((t_offset_s * 1000.0).max(0.0) as u64).checked_div(step_ms).unwrap_or(0).min(last);
        let step_s = step_ms as f64 / 1000.0;
        while self.applied < target {
            let d = &self.trace.diffs[self.applied as usize + 1];
            self.engine.apply_diff(d)?;
            self.handovers.extend(handovers_in(d, step_s));
            self.applied += 1;
        }
        Ok(())
    }

    pub fn step(&self) -> u64 {
        self.applied
    }

    pub fn handovers(&self) -> &[HandoverEvent] {
        &self.handovers
    }

    /// First apply error hit while serving a measurement, if any.
    pub fn take_failure(&mut self) -> Option<Error> {
        self.failure.take()
    }
}

impl GraphSource for TraceDriver<'_> {
    fn with_graph_at<R>(&mut self, t_offset_s: f64, f: impl FnOnce(&NetGraph) -> R) -> R {
        if let Err(e) = self.advance_to(t_offset_s) {
            self.failure.get_or_insert(e);
        }
        self.sim.with_graph(f)
    }
}

#[derive(Debug, Clone)]
pub struct FidelityOptions {
    pub duration_s: f64,
    pub mode: TopologyMode,
    pub seed: u64,
    pub per_hop_processing_us: u64,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        FidelityOptions {
            duration_s: 3600.0,
            mode: TopologyMode::Grid,
            seed: 1,
            per_hop_processing_us: DEFAULT_PER_HOP_PROCESSING_US,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FidelityReport {
    pub records: Vec<MeasurementRecord>,
    pub handovers: Vec<HandoverEvent>,
}

/// Executes `plan` every `plan.period_s` from t = 0 while the trace plays.
/// Unreachable intervals show up as missing or zero samples.
pub fn fidelity_run(
    scenario: &Scenario,
    trace: &TraceFile,
    plan: &MeasurementPlan,
    opts: &FidelityOptions,
) -> Result<FidelityReport> {
    trace.check_scenario(scenario)?;
    let lookup = |name: &str| {
        scenario.ground_station_id(name).ok_or_else(|| Error::config(format!("unknown ground station {name:?}")))
    };
    let (client, server) = (lookup(&plan.client)?, lookup(&plan.server)?);
    if !(plan.period_s > 0.0) {
        return Err(Error::config("measurement period must be positive"));
    }
    let sim = SimulatedBackend::new(opts.mode);
    let mut driver = TraceDriver::new(&sim, trace)?;
    let mut sessions = Vec::new();
    for (mbps, direction, label) in
        [(plan.uplink_mbps, Direction::Uplink, "uplink"), (plan.downlink_mbps, Direction::Downlink, "downlink")]
    {
        if let Some(target_mbps) = mbps {
            sessions.push(ThroughputSession { label: label.into(), client, server, direction, target_mbps });
        }
    }

    let mut records = Vec::new();
    let mut round = 0u64;
    loop {
        let t0 = round as f64 * plan.period_s;
        if t0 >= opts.duration_s && !(round == 0 && opts.duration_s == 0.0) {
            break;
        }
        if !sessions.is_empty() && plan.throughput_duration_s > 0 {
            records.extend(sim_throughput_sessions(
                &mut driver,
                &sessions,
                t0,
                plan.throughput_duration_s,
                scenario.gsl_contention,
            ));
        }
        let ping_start = t0 + if sessions.is_empty() { 0.0 } else { f64::from(plan.throughput_duration_s) };
        let params = PingParams {
            count: plan.ping_count,
            interval_s: plan.ping_interval_s,
            per_hop_processing_us: opts.per_hop_processing_us,
            seed: opts.seed.wrapping_add(round),
        };
        if plan.ping_count > 0 {
            records.push(sim_ping(&mut driver, client, server, ping_start, &params));
        }
        if let Some(e) = driver.take_failure() {
            return Err(e);
        }
        round += 1;
        if opts.duration_s == 0.0 {
            break;
        }
    }
    driver.advance_to(opts.duration_s)?;
    Ok(FidelityReport { records, handovers: driver.handovers().to_vec() })
}

#[derive(Serialize)]
struct HandoverRow {
    t_offset_s: f64,
    ground_station: String,
    from: String,
    to: String,
}

/// Columns `t_offset_s,ground_station,from,to`; an empty cell means no satellite.
pub fn write_handovers_csv(events: &[HandoverEvent], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let opt = |s: Option<SatelliteId>| s.map(|s| s.to_string()).unwrap_or_default();
    for e in events {
        out.serialize(HandoverRow {
            t_offset_s: e.t_offset_s,
            ground_station: e.ground_station.to_string(),
            from: opt(e.from),
            to: opt(e.to),
        })
        .map_err(|e| Error::config(format!("csv: {e}")))?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MeasurementKind;
    use crate::bench::presets::scenario_wetlinks;
    use crate::topology::LinkDefaults;
    use crate::trace::precompute;

    fn short_wetlinks(duration: f64, loss: f64) -> (Scenario, MeasurementPlan) {
        let p = scenario_wetlinks();
        let mut sc = p.scenario;
        sc.duration_seconds = duration;
        sc.link_defaults = LinkDefaults::uniform_loss(loss);
        (sc, p.plan)
    }

    #[test]
    fn driver_log_matches_trace() {
        let (sc, plan) = short_wetlinks(900.0, 1.0);
        let trace = precompute(&sc, 1).unwrap();
        let opts = FidelityOptions { duration_s: 900.0, ..Default::default() };
        let rep = fidelity_run(&sc, &trace, &plan, &opts).unwrap();
        assert_eq!(rep.handovers, trace_handovers(&trace));
        // 5 rounds: two throughput sessions and one ping train each
        assert_eq!(rep.records.len(), 15);
        assert_eq!(rep.records.iter().filter(|r| r.kind == MeasurementKind::Ping).count(), 5);
    }

    #[test]
    fn goodput_follows_loss_formula() {
        let (sc, plan) = short_wetlinks(400.0, 1.0);
        let trace = precompute(&sc, 1).unwrap();
        let opts = FidelityOptions { duration_s: 400.0, ..Default::default() };
        let rep = fidelity_run(&sc, &trace, &plan, &opts).unwrap();
        for r in rep.records.iter().filter(|r| r.kind == MeasurementKind::Throughput) {
            let cap = if r.label == "uplink" { 100.0 } else { 500.0 };
            for s in &r.samples {
                if let Some(h) = s.hops {
                    assert!((s.value - cap * 0.99f64.powi(h as i32)).abs() < 1e-9, "{s:?}");
                }
            }
        }
    }

    #[test]
    fn handover_rows() {
        let ev = vec![HandoverEvent {
            t_offset_s: 15.0,
            ground_station: NodeId::Ground(0),
            from: Some(SatelliteId::new(0, 1, 2)),
            to: None,
        }];
        let mut buf = Vec::new();
        write_handovers_csv(&ev, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_offset_s,ground_station,from,to\n15.0,gs:0,sat:0:1:2,\n");
    }

    #[test]
    fn unknown_station_is_config_error() {
        let (sc, mut plan) = short_wetlinks(0.0, 1.0);
        let trace = precompute(&sc, 1).unwrap();
        plan.client = "atlantis".into();
        assert!(matches!(fidelity_run(&sc, &trace, &plan, &FidelityOptions::default()), Err(Error::Config(_))));
    }
}
