//! Network backends driven by the engine.
//!
//! Every backend implements [`Backend`]. Calls on distinct links (and
//! distinct nodes) may arrive concurrently; calls on the same link arrive
//! in trace order.

mod graph;
pub mod linux;
mod measure;
mod recording;
mod simulated;

use std::sync::Arc;

use thiserror::Error;

use crate::topology::{LinkKey, LinkProps, NodeId};

pub use graph::{shortest_path, NetGraph, PathInfo, TopologyMode};
pub use measure::{
    path_loss_fraction, sim_ping, sim_throughput, sim_throughput_sessions, write_measurements_csv, Direction,
    GraphSource, MeasurementKind, MeasurementRecord, PingParams, Sample, ThroughputSession,
    DEFAULT_PER_HOP_PROCESSING_US,
};
pub use recording::{LatencyModel, LedgerEntry, Op, RecordingBackend};
pub use simulated::SimulatedBackend;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("node {0} already exists")]
    NodeExists(NodeId),
    #[error("link {0} does not exist")]
    NoSuchLink(LinkKey),
    #[error("link {0} already exists")]
    LinkExists(LinkKey),
    #[error("node {node}: cannot {op} from state {state}")]
    InvalidTransition { node: NodeId, op: &'static str, state: &'static str },
    #[error("backend unsupported here: {0}")]
    Unsupported(String),
    #[error("backend command failed: {0}")]
    Command(String),
}

/// Node and link lifecycle operations every backend provides.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Creates a node running the opaque software `profile`.
    fn create_node(&self, id: NodeId, profile: &str) -> Result<(), BackendError>;
    fn start_node(&self, id: NodeId) -> Result<(), BackendError>;
    fn suspend_node(&self, id: NodeId) -> Result<(), BackendError>;
    fn resume_node(&self, id: NodeId) -> Result<(), BackendError>;
    fn destroy_node(&self, id: NodeId) -> Result<(), BackendError>;

    fn add_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError>;
    /// Removing an absent link is not an error.
    fn remove_link(&self, key: LinkKey) -> Result<(), BackendError>;
    /// Fails with [`BackendError::NoSuchLink`] when the link is absent.
    fn update_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError>;

    fn nodes(&self) -> Vec<NodeId>;
    fn links(&self) -> Vec<LinkKey>;
}

macro_rules! forward_backend {
    ($ptr:ident) => {
        impl<B: Backend + ?Sized> Backend for $ptr<B> {
            fn name(&self) -> &'static str {
                (**self).name()
            }
            fn create_node(&self, id: NodeId, profile: &str) -> Result<(), BackendError> {
                (**self).create_node(id, profile)
            }
            fn start_node(&self, id: NodeId) -> Result<(), BackendError> {
                (**self).start_node(id)
            }
            fn suspend_node(&self, id: NodeId) -> Result<(), BackendError> {
                (**self).suspend_node(id)
            }
            fn resume_node(&self, id: NodeId) -> Result<(), BackendError> {
                (**self).resume_node(id)
            }
            fn destroy_node(&self, id: NodeId) -> Result<(), BackendError> {
                (**self).destroy_node(id)
            }
            fn add_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
                (**self).add_link(key, props)
            }
            fn remove_link(&self, key: LinkKey) -> Result<(), BackendError> {
                (**self).remove_link(key)
            }
            fn update_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
                (**self).update_link(key, props)
            }
            fn nodes(&self) -> Vec<NodeId> {
                (**self).nodes()
            }
            fn links(&self) -> Vec<LinkKey> {
                (**self).links()
            }
        }
    };
}

forward_backend!(Arc);
forward_backend!(Box);

/// Backend selector used by the command line and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Recording,
    Simulated,
    Linux,
}

#[cfg(test)]
pub(crate) mod conformance {
    //! Black-box checks shared by every backend implementation.

    use super::*;
    use crate::orbits::SatelliteId;

    pub fn props(delay_us: u64) -> LinkProps {
        LinkProps { delay_us, loss_pct: 0.0, rate_mbps: 100.0 }
    }

    pub fn sat(p: u16, s: u16) -> NodeId {
        NodeId::Sat(SatelliteId::new(0, p, s))
    }

    pub fn run_all(b: &dyn Backend) {
        let (a, c) = (NodeId::Ground(0), sat(0, 0));
        let k = LinkKey::new(a, c);
        b.create_node(a, "gs-image").unwrap();
        b.create_node(c, "sat-image").unwrap();
        assert_eq!(b.create_node(a, "x"), Err(BackendError::NodeExists(a)));
        b.start_node(a).unwrap();
        b.start_node(c).unwrap();
        assert!(b.resume_node(c).is_err());

        assert_eq!(b.update_link(k, &props(5000)), Err(BackendError::NoSuchLink(k)));
        b.add_link(k, &props(2000)).unwrap();
        assert_eq!(b.add_link(k, &props(2000)), Err(BackendError::LinkExists(k)));
        b.update_link(k, &props(5000)).unwrap();
        assert_eq!(b.links(), vec![k]);

        b.remove_link(k).unwrap();
        b.remove_link(k).unwrap();
        assert!(b.links().is_empty());

        b.suspend_node(c).unwrap();
        b.resume_node(c).unwrap();
        assert!(b.add_link(LinkKey::new(a, sat(9, 9)), &props(1)).is_err());
        b.destroy_node(a).unwrap();
        b.destroy_node(c).unwrap();
        assert_eq!(b.destroy_node(c), Err(BackendError::NoSuchNode(c)));
        assert!(b.nodes().is_empty());
    }
}
