use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{NetGraph, TopologyMode};
use super::{Backend, BackendError};
use crate::topology::{LinkKey, LinkProps, NodeId};

/// Artificial per-operation cost: `constant` plus a uniform draw in `[0, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyModel {
    pub constant: Duration,
    pub jitter: Duration,
    pub seed: u64,
}

impl LatencyModel {
    pub fn constant(d: Duration) -> Self {
        LatencyModel { constant: d, jitter: Duration::ZERO, seed: 0 }
    }

    fn delay_for(&self, seq: u64) -> Duration {
        if self.jitter.is_zero() {
            return self.constant;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ seq.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.constant + self.jitter.mul_f64(rng.gen::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    CreateNode { node: NodeId, profile: String },
    StartNode { node: NodeId },
    SuspendNode { node: NodeId },
    ResumeNode { node: NodeId },
    DestroyNode { node: NodeId },
    AddLink { link: LinkKey, props: LinkProps },
    RemoveLink { link: LinkKey },
    UpdateLink { link: LinkKey, props: LinkProps },
}

impl Op {
    pub fn is_node_op(&self) -> bool {
        !matches!(self, Op::AddLink { .. } | Op::RemoveLink { .. } | Op::UpdateLink { .. })
    }

    pub fn link(&self) -> Option<LinkKey> {
        match self {
            Op::AddLink { link, .. } | Op::RemoveLink { link } | Op::UpdateLink { link, .. } => Some(*link),
            _ => None,
        }
    }
}

/// One successfully applied operation with wall-clock bounds relative to
/// the backend's creation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub op: Op,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Default)]
struct Inner {
    graph: NetGraph,
    ledger: Vec<LedgerEntry>,
    issued: u64,
}

/// Backend that only keeps an append-only log of the operations it was
/// asked to perform, optionally sleeping to model per-operation cost.
#[derive(Debug)]
pub struct RecordingBackend {
    latency: LatencyModel,
    origin: Instant,
    inner: Mutex<Inner>,
}

impl Default for RecordingBackend {
    fn default() -> Self {
        RecordingBackend::new(LatencyModel::default())
    }
}

impl RecordingBackend {
    pub fn new(latency: LatencyModel) -> Self {
        RecordingBackend { latency, origin: Instant::now(), inner: Mutex::new(Inner::default()) }
    }

    pub fn origin(&self) -> Instant {
        self.origin
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.inner.lock().unwrap().ledger.clone()
    }

    pub fn graph(&self) -> NetGraph {
        self.inner.lock().unwrap().graph.clone()
    }

    /// Rebuilds the graph by replaying the ledger from scratch.
    pub fn replay_ledger(entries: &[LedgerEntry]) -> Result<NetGraph, BackendError> {
        let mut g = NetGraph::new(TopologyMode::Grid);
        for e in entries {
            apply_op(&mut g, &e.op)?;
        }
        Ok(g)
    }

    fn record(&self, op: Op) -> Result<(), BackendError> {
        let seq = {
            let mut inner = self.inner.lock().unwrap();
            inner.issued += 1;
            inner.issued - 1
        };
        let start = self.origin.elapsed();
        let cost = self.latency.delay_for(seq);
        if !cost.is_zero() {
            thread::sleep(cost);
        }
        let mut inner = self.inner.lock().unwrap();
        apply_op(&mut inner.graph, &op)?;
        let end = self.origin.elapsed();
        let seq = inner.ledger.len() as u64;
        inner.ledger.push(LedgerEntry { seq, op, start_s: start.as_secs_f64(), end_s: end.as_secs_f64() });
        Ok(())
    }
}

fn apply_op(g: &mut NetGraph, op: &Op) -> Result<(), BackendError> {
    match op {
        Op::CreateNode { node, profile } => g.create_node(*node, profile),
        Op::StartNode { node } => g.start_node(*node),
        Op::SuspendNode { node } => g.suspend_node(*node),
        Op::ResumeNode { node } => g.resume_node(*node),
        Op::DestroyNode { node } => g.destroy_node(*node),
        Op::AddLink { link, props } => g.add_link(*link, props),
        Op::RemoveLink { link } => g.remove_link(*link),
        Op::UpdateLink { link, props } => g.update_link(*link, props),
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &'static str {
        "recording"
    }
    fn create_node(&self, node: NodeId, profile: &str) -> Result<(), BackendError> {
        self.record(Op::CreateNode { node, profile: profile.to_owned() })
    }
    fn start_node(&self, node: NodeId) -> Result<(), BackendError> {
        self.record(Op::StartNode { node })
    }
    fn suspend_node(&self, node: NodeId) -> Result<(), BackendError> {
        self.record(Op::SuspendNode { node })
    }
    fn resume_node(&self, node: NodeId) -> Result<(), BackendError> {
        self.record(Op::ResumeNode { node })
    }
    fn destroy_node(&self, node: NodeId) -> Result<(), BackendError> {
        self.record(Op::DestroyNode { node })
    }
    fn add_link(&self, link: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        self.record(Op::AddLink { link, props: *props })
    }
    fn remove_link(&self, link: LinkKey) -> Result<(), BackendError> {
        self.record(Op::RemoveLink { link })
    }
    fn update_link(&self, link: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        self.record(Op::UpdateLink { link, props: *props })
    }
    fn nodes(&self) -> Vec<NodeId> {
        self.inner.lock().unwrap().graph.node_ids()
    }
    fn links(&self) -> Vec<LinkKey> {
        self.inner.lock().unwrap().graph.link_map().keys().copied().collect()
    }
}
