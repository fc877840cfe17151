use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::topology::{LinkKey, LinkProps, NodeId, NodeState};

/// How traffic between nodes is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    /// Packets traverse the ISL/GSL mesh hop by hop.
    #[default]
    Grid,
    /// Every node hangs off one hub; any pair is two hops apart and the hub
    /// applies the mesh path's delay and loss.
    Star,
}

/// Undirected weighted graph mirroring the operations applied to a backend.
#[derive(Debug, Clone, Default)]
pub struct NetGraph {
    mode: TopologyMode,
    nodes: BTreeMap<NodeId, (NodeState, String)>,
    links: BTreeMap<LinkKey, LinkProps>,
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl PartialEq for NetGraph {
    fn eq(&self, o: &Self) -> bool {
        self.mode == o.mode && self.nodes == o.nodes && self.links == o.links
    }
}

fn state_name(s: NodeState) -> &'static str {
    match s {
        NodeState::Created => "created",
        NodeState::Started => "started",
        NodeState::Suspended => "suspended",
    }
}

impl NetGraph {
    pub fn new(mode: TopologyMode) -> Self {
        NetGraph { mode, ..Default::default() }
    }

    pub fn mode(&self) -> TopologyMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: TopologyMode) {
        self.mode = mode;
    }

    pub fn node_state(&self, n: &NodeId) -> Option<NodeState> {
        self.nodes.get(n).map(|(s, _)| *s)
    }

    pub fn node_profile(&self, n: &NodeId) -> Option<&str> {
        self.nodes.get(n).map(|(_, p)| p.as_str())
    }

    pub fn link(&self, k: &LinkKey) -> Option<&LinkProps> {
        self.links.get(k)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn link_map(&self) -> &BTreeMap<LinkKey, LinkProps> {
        &self.links
    }

    pub fn neighbors(&self, n: &NodeId) -> impl Iterator<Item = &NodeId> {
        self.adj.get(n).into_iter().flatten()
    }

    pub fn create_node(&mut self, id: NodeId, profile: &str) -> Result<(), BackendError> {
        if self.nodes.contains_key(&id) {
            return Err(BackendError::NodeExists(id));
        }
        self.nodes.insert(id, (NodeState::Created, profile.to_owned()));
        Ok(())
    }

    fn transition(&mut self, id: NodeId, op: &'static str, from: NodeState, to: NodeState) -> Result<(), BackendError> {
        let (st, _) = self.nodes.get_mut(&id).ok_or(BackendError::NoSuchNode(id))?;
        if *st != from {
            return Err(BackendError::InvalidTransition { node: id, op, state: state_name(*st) });
        }
        *st = to;
        Ok(())
    }

    pub fn start_node(&mut self, id: NodeId) -> Result<(), BackendError> {
        self.transition(id, "start", NodeState::Created, NodeState::Started)
    }

    pub fn suspend_node(&mut self, id: NodeId) -> Result<(), BackendError> {
        self.transition(id, "suspend", NodeState::Started, NodeState::Suspended)
    }

    pub fn resume_node(&mut self, id: NodeId) -> Result<(), BackendError> {
        self.transition(id, "resume", NodeState::Suspended, NodeState::Started)
    }

    /// Destroys a node together with any links still attached to it.
    pub fn destroy_node(&mut self, id: NodeId) -> Result<(), BackendError> {
        self.nodes.remove(&id).ok_or(BackendError::NoSuchNode(id))?;
        for n in self.adj.remove(&id).unwrap_or_default() {
            self.links.remove(&LinkKey::new(id, n));
            if let Some(s) = self.adj.get_mut(&n) {
                s.remove(&id);
            }
        }
        Ok(())
    }

    pub fn add_link(&mut self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        for n in [key.a(), key.b()] {
            if !self.nodes.contains_key(&n) {
                return Err(BackendError::NoSuchNode(n));
            }
        }
        if self.links.contains_key(&key) {
            return Err(BackendError::LinkExists(key));
        }
        self.links.insert(key, *props);
        self.adj.entry(key.a()).or_default().insert(key.b());
        self.adj.entry(key.b()).or_default().insert(key.a());
        Ok(())
    }

    pub fn remove_link(&mut self, key: LinkKey) -> Result<(), BackendError> {
        if self.links.remove(&key).is_some() {
            for (x, y) in [(key.a(), key.b()), (key.b(), key.a())] {
                if let Some(s) = self.adj.get_mut(&x) {
                    s.remove(&y);
                }
            }
        }
        Ok(())
    }

    pub fn update_link(&mut self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        *self.links.get_mut(&key).ok_or(BackendError::NoSuchLink(key))? = *props;
        Ok(())
    }

    fn routable(&self, n: &NodeId) -> bool {
        self.node_state(n) == Some(NodeState::Started)
    }
}

/// A route between two nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathInfo {
    /// Mesh nodes from source to destination inclusive.
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkKey>,
    /// Hop count as seen by packets (always 2 in star mode).
    pub hops: u32,
    pub delay_us: u64,
}

fn dijkstra(g: &NetGraph, ids: &[NodeId], from: usize) -> Vec<u64> {
    let mut dist = vec![u64::MAX; ids.len()];
    let mut heap = BinaryHeap::new();
    dist[from] = 0;
    heap.push(Reverse((0u64, from)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for v in g.neighbors(&ids[u]) {
            if !g.routable(v) {
                continue;
            }
            let w = g.links[&LinkKey::new(ids[u], *v)].delay_us;
            let j = ids.binary_search(v).expect("neighbor is a node");
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Reverse((nd, j)));
            }
        }
    }
    dist
}

/// Minimum-delay route from `src` to `dst`.
///
/// Among equal-delay routes the one whose node sequence is
/// lexicographically smallest wins. Only started nodes carry traffic.
/// Returns `None` when either endpoint is unknown or no route exists.
pub fn shortest_path(g: &NetGraph, src: NodeId, dst: NodeId) -> Option<PathInfo> {
    if !g.nodes.contains_key(&src) || !g.nodes.contains_key(&dst) {
        return None;
    }
    if src == dst {
        return Some(PathInfo { nodes: vec![src], links: vec![], hops: 0, delay_us: 0 });
    }
    if !g.routable(&src) || !g.routable(&dst) {
        return None;
    }
    let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
    let s = ids.binary_search(&src).ok()?;
    let t = ids.binary_search(&dst).ok()?;
    let from_src = dijkstra(g, &ids, s);
    let total = from_src[t];
    if total == u64::MAX {
        return None;
    }
    let to_dst = dijkstra(g, &ids, t);

    // Walk forward choosing the smallest next node that stays on some
    // minimum-delay route.
    let mut nodes = vec![src];
    let mut visited = BTreeSet::from([src]);
    let mut links = Vec::new();
    let mut u = s;
    while u != t {
        let next = g.neighbors(&ids[u]).find(|v| {
            if visited.contains(*v) || !g.routable(v) {
                return false;
            }
            let j = ids.binary_search(v).expect("neighbor is a node");
            let w = g.links[&LinkKey::new(ids[u], **v)].delay_us;
            to_dst[j] != u64::MAX && from_src[u] + w + to_dst[j] == total
        })?;
        let j = ids.binary_search(next).expect("neighbor is a node");
        links.push(LinkKey::new(ids[u], *next));
        nodes.push(*next);
        visited.insert(*next);
        u = j;
    }
    let hops = match g.mode {
        TopologyMode::Grid => links.len() as u32,
        TopologyMode::Star => 2,
    };
    Some(PathInfo { nodes, links, hops, delay_us: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::SatelliteId;

    fn n(i: u16) -> NodeId {
        NodeId::Sat(SatelliteId::new(0, 0, i))
    }

    fn p(d: u64) -> LinkProps {
        LinkProps { delay_us: d, loss_pct: 0.0, rate_mbps: 10.0 }
    }

    fn line(mode: TopologyMode, delays: &[u64]) -> NetGraph {
        let mut g = NetGraph::new(mode);
        for i in 0..=delays.len() as u16 {
            g.create_node(n(i), "img").unwrap();
            g.start_node(n(i)).unwrap();
        }
        for (i, d) in delays.iter().enumerate() {
            g.add_link(LinkKey::new(n(i as u16), n(i as u16 + 1)), &p(*d)).unwrap();
        }
        g
    }

    #[test]
    fn same_node_is_zero_hops() {
        let g = line(TopologyMode::Grid, &[10]);
        let r = shortest_path(&g, n(0), n(0)).unwrap();
        assert_eq!((r.hops, r.delay_us), (0, 0));
    }

    #[test]
    fn star_is_two_hops_with_mesh_delay() {
        let g = line(TopologyMode::Star, &[10, 20, 30, 40]);
        let r = shortest_path(&g, n(0), n(4)).unwrap();
        assert_eq!(r.hops, 2);
        assert_eq!(r.delay_us, 100);
        assert_eq!(r.links.len(), 4);
        let grid = line(TopologyMode::Grid, &[10, 20, 30, 40]);
        assert_eq!(shortest_path(&grid, n(0), n(4)).unwrap().hops, 4);
    }

    #[test]
    fn unreachable_and_suspended() {
        let mut g = line(TopologyMode::Grid, &[10, 10]);
        g.create_node(n(9), "img").unwrap();
        g.start_node(n(9)).unwrap();
        assert!(shortest_path(&g, n(0), n(9)).is_none());
        assert!(shortest_path(&g, n(0), n(77)).is_none());
        g.suspend_node(n(1)).unwrap();
        assert!(shortest_path(&g, n(0), n(2)).is_none());
    }

    #[test]
    fn ties_take_smallest_sequence() {
        // 0-1-3 and 0-2-3 both cost 20
        let mut g = NetGraph::new(TopologyMode::Grid);
        for i in 0..4 {
            g.create_node(n(i), "").unwrap();
            g.start_node(n(i)).unwrap();
        }
        for (a, b) in [(0, 2), (2, 3), (0, 1), (1, 3)] {
            g.add_link(LinkKey::new(n(a), n(b)), &p(10)).unwrap();
        }
        assert_eq!(shortest_path(&g, n(0), n(3)).unwrap().nodes, vec![n(0), n(1), n(3)]);
        assert_eq!(shortest_path(&g, n(3), n(0)).unwrap().nodes, vec![n(3), n(1), n(0)]);
    }

    #[test]
    fn destroy_drops_attached_links() {
        let mut g = line(TopologyMode::Grid, &[5, 5]);
        g.destroy_node(n(1)).unwrap();
        assert!(g.link_map().is_empty());
        assert_eq!(g.neighbors(&n(0)).count(), 0);
    }
}
