use std::sync::RwLock;

use super::graph::{NetGraph, TopologyMode};
use super::measure::GraphSource;
use super::{Backend, BackendError};
use crate::topology::{LinkKey, LinkProps, NodeId};

/// In-process network: applied operations update a [`NetGraph`] that the
/// measurement functions route over.
#[derive(Debug, Default)]
pub struct SimulatedBackend {
    graph: RwLock<NetGraph>,
}

impl SimulatedBackend {
    pub fn new(mode: TopologyMode) -> Self {
        SimulatedBackend { graph: RwLock::new(NetGraph::new(mode)) }
    }

    /// Point-in-time copy of the graph.
    pub fn graph(&self) -> NetGraph {
        self.graph.read().unwrap().clone()
    }

    pub fn with_graph<R>(&self, f: impl FnOnce(&NetGraph) -> R) -> R {
        f(&self.graph.read().unwrap())
    }

    pub fn set_mode(&self, mode: TopologyMode) {
        self.graph.write().unwrap().set_mode(mode);
    }

    fn write<R>(&self, f: impl FnOnce(&mut NetGraph) -> R) -> R {
        f(&mut self.graph.write().unwrap())
    }
}

impl GraphSource for SimulatedBackend {
    fn with_graph_at<R>(&mut self, _t_offset_s: f64, f: impl FnOnce(&NetGraph) -> R) -> R {
        self.with_graph(f)
    }
}

impl Backend for SimulatedBackend {
    fn name(&self) -> &'static str {
        "simulated"
    }
    fn create_node(&self, id: NodeId, profile: &str) -> Result<(), BackendError> {
        self.write(|g| g.create_node(id, profile))
    }
    fn start_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.write(|g| g.start_node(id))
    }
    fn suspend_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.write(|g| g.suspend_node(id))
    }
    fn resume_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.write(|g| g.resume_node(id))
    }
    fn destroy_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.write(|g| g.destroy_node(id))
    }
    fn add_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        self.write(|g| g.add_link(key, props))
    }
    fn remove_link(&self, key: LinkKey) -> Result<(), BackendError> {
        self.write(|g| g.remove_link(key))
    }
    fn update_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        self.write(|g| g.update_link(key, props))
    }
    fn nodes(&self) -> Vec<NodeId> {
        self.graph.read().unwrap().node_ids()
    }
    fn links(&self) -> Vec<LinkKey> {
        self.graph.read().unwrap().link_map().keys().copied().collect()
    }
}
