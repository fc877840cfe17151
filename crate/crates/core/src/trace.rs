//! Offline precomputation of topology deltas into a replayable trace.
//!
//! A trace file is JSON lines: one header record followed by one
//! [`StepDiff`] per step, starting with step 0, which is the full build
//! from an empty topology. Every record is written with sorted keys and no
//! whitespace, so equal traces are equal byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Constellation, LinkKey, LinkProps, NodeId, NodeState, Scenario, TopologySnapshot};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDiff {
    pub step_index: u64,
    pub node_transitions: Vec<(NodeId, NodeState)>,
    pub links_added: Vec<(LinkKey, LinkProps)>,
    pub links_removed: Vec<LinkKey>,
    pub props_changed: Vec<(LinkKey, LinkProps)>,
}

impl StepDiff {
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of entries across all lists.
    pub fn len(&self) -> usize {
        self.node_transitions.len() + self.links_added.len() + self.links_removed.len() + self.props_changed.len()
    }
}

/// Computes the delta from `prev` to `next`.
///
/// A link present in both is reported in `props_changed` only when its loss
/// or rate changed, or when its delay moved by at least `delay_quantum_us`
/// (any change when the quantum is 0).
pub fn diff(prev: &TopologySnapshot, next: &TopologySnapshot, delay_quantum_us: u64) -> StepDiff {
    let mut d = StepDiff::default();
    for (n, st) in &next.nodes {
        if prev.nodes.get(n) != Some(st) {
            d.node_transitions.push((*n, *st));
        }
    }
    debug_assert!(prev.nodes.keys().all(|n| next.nodes.contains_key(n)), "nodes are never removed");
    for (old, new) in [(&prev.gsl_links, &next.gsl_links), (&prev.isl_links, &next.isl_links)] {
        diff_links(old, new, delay_quantum_us, &mut d);
    }
    d.links_added.sort_by_key(|a| a.0);
    d.links_removed.sort();
    d.props_changed.sort_by_key(|a| a.0);
    d
}

fn diff_links(old: &BTreeMap<LinkKey, LinkProps>, new: &BTreeMap<LinkKey, LinkProps>, quantum: u64, d: &mut StepDiff) {
    for (k, p) in new {
        match old.get(k) {
            None => d.links_added.push((*k, *p)),
            Some(o) => {
                let moved = o.delay_us.abs_diff(p.delay_us);
                if o.loss_pct != p.loss_pct || o.rate_mbps != p.rate_mbps || (moved > 0 && moved >= quantum) {
                    d.props_changed.push((*k, *p));
                }
            }
        }
    }
    for k in old.keys() {
        if !new.contains_key(k) {
            d.links_removed.push(*k);
        }
    }
}

/// Applies a diff in place. Fails if the diff does not fit the state.
pub fn apply(state: &mut TopologySnapshot, d: &StepDiff) -> Result<()> {
    let err = |reason: String| Error::TraceRecord { step: d.step_index, reason };
    for k in &d.links_removed {
        let m = if k.is_gsl() { &mut state.gsl_links } else { &mut state.isl_links };
        m.remove(k).ok_or_else(|| err(format!("removing absent link {k}")))?;
    }
    for (n, st) in &d.node_transitions {
        state.nodes.insert(*n, *st);
    }
    for (k, p) in &d.links_added {
        let m = if k.is_gsl() { &mut state.gsl_links } else { &mut state.isl_links };
        if m.insert(*k, *p).is_some() {
            return Err(err(format!("adding existing link {k}")));
        }
    }
    for (k, p) in &d.props_changed {
        let m = if k.is_gsl() { &mut state.gsl_links } else { &mut state.isl_links };
        *m.get_mut(k).ok_or_else(|| err(format!("changing absent link {k}")))? = *p;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format_version: u32,
    pub scenario_digest: String,
    pub epoch: String,
    pub step_seconds: f64,
    pub step_count: u64,
}

/// A header plus `step_count + 1` diffs (indices `0..=step_count`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub diffs: Vec<StepDiff>,
}

impl TraceFile {
    pub fn step_ms(&self) -> u64 {
        (self.header.step_seconds * 1000.0).round() as u64
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        let digest = scenario.digest();
        if digest != self.header.scenario_digest {
            return Err(Error::DigestMismatch { trace: self.header.scenario_digest.clone(), scenario: digest });
        }
        Ok(())
    }

    /// Topology after applying diffs `0..=k`.
    pub fn replay_to(&self, k: u64) -> Result<TopologySnapshot> {
        let mut s = TopologySnapshot::empty();
        for d in &self.diffs[..=k as usize] {
            apply(&mut s, d)?;
        }
        Ok(s)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", canonical(&self.header)?).map_err(|e| Error::io("<trace>", e))?;
        for d in &self.diffs {
            writeln!(w, "{}", canonical(d)?).map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("in-memory write");
        v
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let head = lines
            .next()
            .ok_or(Error::TraceTruncated { expected: 1, found: 0 })?
            .map_err(|e| Error::io("<trace>", e))?;
        let raw: serde_json::Value =
            serde_json::from_str(&head).map_err(|e| Error::config(format!("trace header: {e}")))?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != TRACE_FORMAT_VERSION {
            return Err(Error::TraceVersion { found: version, expected: TRACE_FORMAT_VERSION });
        }
        let header: TraceHeader =
            serde_json::from_value(raw).map_err(|e| Error::config(format!("trace header: {e}")))?;
        let mut diffs = Vec::with_capacity(header.step_count as usize + 1);
        for (i, line) in lines.enumerate() {
            let step = i as u64;
            let line = line.map_err(|e| Error::io("<trace>", e))?;
            let d: StepDiff =
                serde_json::from_str(&line).map_err(|e| Error::TraceRecord { step, reason: e.to_string() })?;
            if d.step_index != step {
                return Err(Error::TraceRecord { step, reason: format!("out-of-order step_index {}", d.step_index) });
            }
            if step > header.step_count {
                return Err(Error::TraceRecord { step, reason: "more records than step_count".into() });
            }
            diffs.push(d);
        }
        if diffs.len() as u64 != header.step_count + 1 {
            return Err(Error::TraceTruncated { expected: header.step_count + 1, found: diffs.len() as u64 });
        }
        Ok(TraceFile { header, diffs })
    }
}

fn canonical<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(&serde_json::to_value(v)?)?)
}

pub fn write_trace(trace: &TraceFile, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    trace.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Reads a trace, optionally checking it was built from `scenario`.
pub fn read_trace(path: impl AsRef<Path>, scenario: Option<&Scenario>) -> Result<TraceFile> {
    let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let t = TraceFile::read_from(f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(&path, source),
        e => e,
    })?;
    if let Some(sc) = scenario {
        t.check_scenario(sc)?;
    }
    Ok(t)
}

pub fn precompute(scenario: &Scenario, workers: usize) -> Result<TraceFile> {
    precompute_with_progress(scenario, workers, |_, _| {})
}

/// Evaluates every step instant on a pool of `workers` threads and diffs
/// them in order. `progress(done, total)` is called after each chunk.
pub fn precompute_with_progress(
    scenario: &Scenario,
    workers: usize,
    mut progress: impl FnMut(u64, u64),
) -> Result<TraceFile> {
    if workers == 0 {
        return Err(Error::config("workers must be at least 1"));
    }
    let c = Constellation::new(scenario)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let steps = scenario.step_count();
    let total = steps + 1;
    let chunk = (workers as u64 * 8).max(16);
    let q = scenario.delay_quantum_us;

    let mut stored = TopologySnapshot::empty();
    let mut gsl = vec![None; scenario.ground_stations.len()];
    let mut diffs = Vec::with_capacity(total as usize);
    let mut start = 0;
    while start < total {
        let end = (start + chunk).min(total);
        let frames: Vec<_> =
            pool.install(|| (start..end).into_par_iter().map(|k| c.frame(scenario.instant(k))).collect());
        for (k, f) in (start..end).zip(&frames) {
            gsl = c.choose_gsls(f, &gsl);
            let snap = c.assemble(f, &gsl);
            let mut d = diff(&stored, &snap, q);
            d.step_index = k;
            apply(&mut stored, &d)?;
            stored.t = snap.t;
            diffs.push(d);
        }
        progress(end, total);
        start = end;
    }
    Ok(TraceFile {
        header: TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            scenario_digest: scenario.digest(),
            epoch: scenario.epoch.clone(),
            step_seconds: scenario.step_seconds,
            step_count: steps,
        },
        diffs,
    })
}
