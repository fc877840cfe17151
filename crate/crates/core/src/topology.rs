//! Scenario description and per-instant topology evaluation.
//!
//! A [`Scenario`] is the declarative input. [`Constellation`] caches what
//! does not change over time (orbital elements, ground positions, the ISL
//! grid) and evaluates a [`Frame`] per instant. Frames are independent of
//! each other and can be computed in any order; turning a frame into a
//! [`TopologySnapshot`] needs the previous GSL selection only for ground
//! stations in sticky mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{
    distance_m, ecef_to_geodetic, elevation_deg, geodetic_to_ecef, normalize_lon_deg, propagation_delay_us, EcefPos,
    GeodeticCoord, SimInstant,
};
use crate::orbits::{generate_shell, propagate, OrbitalElements, SatelliteId, ShellConfig};

pub const DEFAULT_MIN_ELEVATION_DEG: f64 = 25.0;
pub const DEFAULT_NODE_BUDGET: usize = 2_000;
pub const DEFAULT_LINK_BUDGET: usize = 8_000;
pub const DEFAULT_DELAY_QUANTUM_US: u64 = 50;

/// A node of the emulated network: a ground station (by index into the
/// scenario's station list) or a satellite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Ground(u16),
    Sat(SatelliteId),
}

impl NodeId {
    pub fn is_ground(&self) -> bool {
        matches!(self, NodeId::Ground(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Ground(i) => write!(f, "gs:{i}"),
            NodeId::Sat(s) => s.fmt(f),
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(i) = s.strip_prefix("gs:") {
            return i.parse().map(NodeId::Ground).map_err(|_| Error::config(format!("bad node id {s:?}")));
        }
        s.parse().map(NodeId::Sat)
    }
}

impl From<SatelliteId> for NodeId {
    fn from(s: SatelliteId) -> Self {
        NodeId::Sat(s)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Undirected link endpoints, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct LinkKey(NodeId, NodeId);

impl LinkKey {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            LinkKey(a, b)
        } else {
            LinkKey(b, a)
        }
    }

    pub fn a(&self) -> NodeId {
        self.0
    }

    pub fn b(&self) -> NodeId {
        self.1
    }

    pub fn is_gsl(&self) -> bool {
        self.0.is_ground() || self.1.is_ground()
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if self.0 == n {
            self.1
        } else {
            self.0
        }
    }
}

impl TryFrom<(NodeId, NodeId)> for LinkKey {
    type Error = String;
    fn try_from((a, b): (NodeId, NodeId)) -> std::result::Result<Self, String> {
        if a > b {
            return Err(format!("link endpoints out of order: {a} > {b}"));
        }
        Ok(LinkKey(a, b))
    }
}

impl From<LinkKey> for (NodeId, NodeId) {
    fn from(k: LinkKey) -> Self {
        (k.0, k.1)
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}--{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Created,
    Started,
    Suspended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProps {
    pub delay_us: u64,
    pub loss_pct: f64,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkClassDefaults {
    pub loss_pct: f64,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDefaults {
    pub gsl: LinkClassDefaults,
    pub isl: LinkClassDefaults,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            gsl: LinkClassDefaults { loss_pct: 1.0, rate_mbps: 1_000.0 },
            isl: LinkClassDefaults { loss_pct: 1.0, rate_mbps: 10_000.0 },
        }
    }
}

impl LinkDefaults {
    /// All links at 1.5 % loss, as one of the surveyed emulators configures them.
    pub fn uniform_loss(loss_pct: f64) -> Self {
        let mut d = LinkDefaults::default();
        d.gsl.loss_pct = loss_pct;
        d.isl.loss_pct = loss_pct;
        d
    }

    pub fn for_key(&self, k: &LinkKey) -> &LinkClassDefaults {
        if k.is_gsl() {
            &self.gsl
        } else {
            &self.isl
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, c) in [("gsl", &self.gsl), ("isl", &self.isl)] {
            if !(0.0..=100.0).contains(&c.loss_pct) {
                return Err(Error::config(format!("{name} loss_pct {} outside [0, 100]", c.loss_pct)));
            }
            if !(c.rate_mbps > 0.0) || !c.rate_mbps.is_finite() {
                return Err(Error::config(format!("{name} rate_mbps must be positive")));
            }
        }
        Ok(())
    }
}

/// Geographic region; satellites whose sub-satellite point lies outside it
/// are suspended. `lon_min > lon_max` denotes a box crossing the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub const WHOLE_GLOBE: BoundingBox = BoundingBox { lat_min: -90.0, lat_max: 90.0, lon_min: -180.0, lon_max: 180.0 };

    pub fn contains(&self, lat_deg: f64, lon_deg: f64) -> bool {
        if lat_deg < self.lat_min || lat_deg > self.lat_max {
            return false;
        }
        if self.lon_max - self.lon_min >= 360.0 {
            return true;
        }
        let lon = normalize_lon_deg(lon_deg);
        let (lo, hi) = (normalize_lon_deg(self.lon_min), normalize_lon_deg(self.lon_max));
        if lo <= hi {
            lon >= lo && lon <= hi
        } else {
            lon >= lo || lon <= hi
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lat_min <= self.lat_max) {
            return Err(Error::config("bounding box lat_min exceeds lat_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GslMode {
    /// Always the closest visible satellite.
    #[default]
    Closest,
    /// Keep the current satellite while it stays visible.
    Sticky,
}

fn default_min_elevation() -> f64 {
    DEFAULT_MIN_ELEVATION_DEG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStationConfig {
    pub name: String,
    pub location: GeodeticCoord,
    #[serde(default = "default_min_elevation")]
    pub min_elevation_deg: f64,
    #[serde(default)]
    pub gsl_mode: GslMode,
}

impl GroundStationConfig {
    pub fn new(name: impl Into<String>, lat_deg: f64, lon_deg: f64) -> Result<Self> {
        Ok(GroundStationConfig {
            name: name.into(),
            location: GeodeticCoord::new(lat_deg, lon_deg, 0.0)?,
            min_elevation_deg: DEFAULT_MIN_ELEVATION_DEG,
            gsl_mode: GslMode::Closest,
        })
    }
}

fn default_node_budget() -> usize {
    DEFAULT_NODE_BUDGET
}
fn default_link_budget() -> usize {
    DEFAULT_LINK_BUDGET
}
fn default_quantum() -> u64 {
    DEFAULT_DELAY_QUANTUM_US
}

/// Complete declarative description of one emulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// RFC 3339 UTC timestamp of simulated time zero.
    pub epoch: String,
    pub step_seconds: f64,
    pub duration_seconds: f64,
    pub shells: Vec<ShellConfig>,
    #[serde(default)]
    pub ground_stations: Vec<GroundStationConfig>,
    #[serde(default)]
    pub link_defaults: LinkDefaults,
    #[serde(default)]
    pub bounding_box: Option<BoundingBox>,
    #[serde(default)]
    pub gsl_contention: bool,
    /// Persisting-link delay changes smaller than this are not emitted.
    #[serde(default = "default_quantum")]
    pub delay_quantum_us: u64,
    #[serde(default = "default_node_budget")]
    pub node_budget: usize,
    #[serde(default = "default_link_budget")]
    pub link_budget: usize,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| Error::config(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Scenario::from_json(&text)
    }

    /// Canonical serialization: sorted keys, no whitespace.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Pretty form for files written for people.
    pub fn pretty_json(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serializes");
        serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        SimInstant::parse_epoch(&self.epoch)?;
        let step_ms = self.step_seconds * 1000.0;
        if !(step_ms >= 1.0) || (step_ms - step_ms.round()).abs() > 1e-6 {
            return Err(Error::config(format!(
                "step_seconds {} must be a positive whole number of milliseconds",
                self.step_seconds
            )));
        }
        if !(self.duration_seconds >= 0.0) || !self.duration_seconds.is_finite() {
            return Err(Error::config("duration_seconds must be non-negative"));
        }
        if self.shells.is_empty() {
            return Err(Error::config("scenario has no shells"));
        }
        if self.shells.len() > usize::from(u16::MAX) || self.ground_stations.len() > usize::from(u16::MAX) {
            return Err(Error::budget("too many shells or ground stations"));
        }
        for s in &self.shells {
            s.validate(self.node_budget)?;
        }
        let mut names = BTreeSet::new();
        for gs in &self.ground_stations {
            if !names.insert(gs.name.as_str()) {
                return Err(Error::config(format!("duplicate ground station name {:?}", gs.name)));
            }
            if !(0.0..90.0).contains(&gs.min_elevation_deg) {
                return Err(Error::config(format!("{}: min_elevation_deg outside [0, 90)", gs.name)));
            }
        }
        self.link_defaults.validate()?;
        if let Some(b) = &self.bounding_box {
            b.validate()?;
        }
        let nodes = self.node_count();
        if nodes > self.node_budget {
            return Err(Error::budget(format!("{nodes} nodes exceed node budget {}", self.node_budget)));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.shells.iter().map(ShellConfig::satellite_count).sum::<usize>() + self.ground_stations.len()
    }

    pub fn step_ms(&self) -> u64 {
        (self.step_seconds * 1000.0).round() as u64
    }

    /// Number of steps after the initial one.
    pub fn step_count(&self) -> u64 {
        let dur_ms = (self.duration_seconds * 1000.0).round() as u64;
        dur_ms / self.step_ms()
    }

    pub fn epoch_utc(&self) -> chrono::DateTime<chrono::Utc> {
        SimInstant::parse_epoch(&self.epoch).expect("validated epoch")
    }

    pub fn instant(&self, step: u64) -> SimInstant {
        SimInstant::new(self.epoch_utc(), step * self.step_ms())
    }

    pub fn ground_station_id(&self, name: &str) -> Option<NodeId> {
        self.ground_stations.iter().position(|g| g.name == name).map(|i| NodeId::Ground(i as u16))
    }

    pub fn satellites(&self) -> Vec<(SatelliteId, OrbitalElements)> {
        self.shells.iter().enumerate().flat_map(|(i, s)| generate_shell(i as u16, s)).collect()
    }
}

/// The +Grid neighbors of `id`: two in-plane, two in the adjacent planes.
/// The seam between the last and first plane exists only for full-arc shells.
pub fn isl_neighbors(id: &SatelliteId, cfg: &ShellConfig) -> BTreeSet<SatelliteId> {
    let (p, s) = (u32::from(id.plane), u32::from(id.slot));
    let (np, ns) = (cfg.planes, cfg.sats_per_plane);
    let mut out = BTreeSet::new();
    let mut push = |pp: u32, ss: u32| {
        let n = SatelliteId::new(id.shell, pp as u16, ss as u16);
        if n != *id {
            out.insert(n);
        }
    };
    if ns > 1 {
        push(p, (s + 1) % ns);
        push(p, (s + ns - 1) % ns);
    }
    if np > 1 {
        let wrap = cfg.is_full_arc();
        if p + 1 < np {
            push(p + 1, s);
        } else if wrap {
            push(0, s);
        }
        if p > 0 {
            push(p - 1, s);
        } else if wrap {
            push(np - 1, s);
        }
    }
    out
}

/// Picks the serving satellite for a ground station among `candidates`
/// (satellite ids with positions). Returns `None` when nothing is above the
/// elevation mask.
pub fn select_gsl(
    gs: &GroundStationConfig,
    gs_pos: &EcefPos,
    candidates: &[(SatelliteId, EcefPos)],
    previous: Option<SatelliteId>,
) -> Option<SatelliteId> {
    let visible = candidates
        .iter()
        .filter(|(_, p)| elevation_deg(gs_pos, p) >= gs.min_elevation_deg)
        .map(|(id, p)| (distance_m(gs_pos, p), *id));
    let mut best: Option<(f64, SatelliteId)> = None;
    for (d, id) in visible {
        if gs.gsl_mode == GslMode::Sticky && Some(id) == previous {
            return Some(id);
        }
        if best.is_none_or(|(bd, bid)| d < bd || (d == bd && id < bid)) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Nodes, links and link properties at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopologySnapshot {
    pub t: Option<SimInstant>,
    pub nodes: BTreeMap<NodeId, NodeState>,
    pub isl_links: BTreeMap<LinkKey, LinkProps>,
    pub gsl_links: BTreeMap<LinkKey, LinkProps>,
}

impl TopologySnapshot {
    pub fn empty() -> Self {
        TopologySnapshot::default()
    }

    pub fn link(&self, k: &LinkKey) -> Option<&LinkProps> {
        if k.is_gsl() {
            self.gsl_links.get(k)
        } else {
            self.isl_links.get(k)
        }
    }

    pub fn links(&self) -> impl Iterator<Item = (&LinkKey, &LinkProps)> {
        self.gsl_links.iter().chain(self.isl_links.iter())
    }

    pub fn link_count(&self) -> usize {
        self.isl_links.len() + self.gsl_links.len()
    }

    pub fn suspended_count(&self) -> usize {
        self.nodes.values().filter(|s| **s != NodeState::Started).count()
    }

    /// The satellite currently serving ground station `gs`, if any.
    pub fn gsl_of(&self, gs: u16) -> Option<SatelliteId> {
        let g = NodeId::Ground(gs);
        self.gsl_links.keys().find_map(|k| match (k.a(), k.b()) {
            (a, NodeId::Sat(s)) if a == g => Some(s),
            _ => None,
        })
    }
}

/// Per-instant evaluation that does not depend on history.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: SimInstant,
    /// Satellite positions in the order of [`Constellation::satellites`].
    pub positions: Vec<EcefPos>,
    pub started: Vec<bool>,
    /// Per ground station: visible started satellites as `(satellite index,
    /// distance)`, closest first, ties by id.
    pub visible: Vec<Vec<(usize, f64)>>,
}

/// Time-invariant part of a scenario, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Constellation {
    scenario: Scenario,
    sats: Vec<(SatelliteId, OrbitalElements)>,
    gs_pos: Vec<EcefPos>,
    isl_pairs: Vec<(usize, usize)>,
}

impl Constellation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let sats = scenario.satellites();
        let index: BTreeMap<SatelliteId, usize> = sats.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
        let mut isl_pairs = Vec::new();
        for (i, (id, _)) in sats.iter().enumerate() {
            let cfg = &scenario.shells[usize::from(id.shell)];
            for n in isl_neighbors(id, cfg) {
                let j = index[&n];
                if i < j {
                    isl_pairs.push((i, j));
                }
            }
        }
        let links = isl_pairs.len() + scenario.ground_stations.len();
        if links > scenario.link_budget {
            return Err(Error::budget(format!("{links} links exceed link budget {}", scenario.link_budget)));
        }
        let gs_pos = scenario.ground_stations.iter().map(|g| geodetic_to_ecef(&g.location)).collect();
        Ok(Constellation { scenario: scenario.clone(), sats, gs_pos, isl_pairs })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn satellites(&self) -> &[(SatelliteId, OrbitalElements)] {
        &self.sats
    }

    pub fn ground_positions(&self) -> &[EcefPos] {
        &self.gs_pos
    }

    pub fn isl_pair_count(&self) -> usize {
        self.isl_pairs.len()
    }

    pub fn positions_at(&self, t: &SimInstant) -> Vec<EcefPos> {
        self.sats.iter().map(|(_, el)| propagate(el, t)).collect()
    }

    pub fn frame(&self, t: SimInstant) -> Frame {
        let positions = self.positions_at(&t);
        let started: Vec<bool> = match &self.scenario.bounding_box {
            None => vec![true; positions.len()],
            Some(b) => positions
                .iter()
                .map(|p| {
                    let g = ecef_to_geodetic(p);
                    b.contains(g.lat_deg(), g.lon_deg())
                })
                .collect(),
        };
        let visible = self
            .scenario
            .ground_stations
            .iter()
            .zip(&self.gs_pos)
            .map(|(gs, gp)| {
                let mut v: Vec<(usize, f64)> = positions
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| started[*i] && elevation_deg(gp, p) >= gs.min_elevation_deg)
                    .map(|(i, p)| (i, distance_m(gp, p)))
                    .collect();
                // satellite indices follow id order, so index order breaks ties by id
                v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                v
            })
            .collect();
        Frame { t, positions, started, visible }
    }

    /// Chooses the serving satellite of every ground station for `frame`.
    pub fn choose_gsls(&self, frame: &Frame, previous: &[Option<SatelliteId>]) -> Vec<Option<SatelliteId>> {
        self.scenario
            .ground_stations
            .iter()
            .enumerate()
            .map(|(g, gs)| {
                let vis = &frame.visible[g];
                if gs.gsl_mode == GslMode::Sticky {
                    if let Some(prev) = previous.get(g).copied().flatten() {
                        if vis.iter().any(|(i, _)| self.sats[*i].0 == prev) {
                            return Some(prev);
                        }
                    }
                }
                vis.first().map(|(i, _)| self.sats[*i].0)
            })
            .collect()
    }

    /// Builds the snapshot for a frame given the GSL choices.
    pub fn assemble(&self, frame: &Frame, gsl: &[Option<SatelliteId>]) -> TopologySnapshot {
        let d = &self.scenario.link_defaults;
        let mut snap = TopologySnapshot { t: Some(frame.t), ..Default::default() };
        for g in 0..self.gs_pos.len() {
            snap.nodes.insert(NodeId::Ground(g as u16), NodeState::Started);
        }
        for (i, (id, _)) in self.sats.iter().enumerate() {
            let st = if frame.started[i] { NodeState::Started } else { NodeState::Suspended };
            snap.nodes.insert(NodeId::Sat(*id), st);
        }
        for &(i, j) in &self.isl_pairs {
            if frame.started[i] && frame.started[j] {
                let delay = propagation_delay_us(distance_m(&frame.positions[i], &frame.positions[j]));
                snap.isl_links.insert(
                    LinkKey::new(self.sats[i].0.into(), self.sats[j].0.into()),
                    LinkProps { delay_us: delay, loss_pct: d.isl.loss_pct, rate_mbps: d.isl.rate_mbps },
                );
            }
        }
        for (g, sel) in gsl.iter().enumerate() {
            let Some(sat) = sel else { continue };
            let i = frame.visible[g]
                .iter()
                .map(|(i, _)| *i)
                .find(|i| self.sats[*i].0 == *sat)
                .expect("selected satellite is visible");
            let delay = propagation_delay_us(distance_m(&self.gs_pos[g], &frame.positions[i]));
            snap.gsl_links.insert(
                LinkKey::new(NodeId::Ground(g as u16), NodeId::Sat(*sat)),
                LinkProps { delay_us: delay, loss_pct: d.gsl.loss_pct, rate_mbps: d.gsl.rate_mbps },
            );
        }
        snap
    }

    pub fn needs_history(&self) -> bool {
        self.scenario.ground_stations.iter().any(|g| g.gsl_mode == GslMode::Sticky)
    }

    /// Snapshot at `t`. With sticky ground stations the GSL choice depends on
    /// history, which is rebuilt by walking the step grid from the epoch.
    pub fn snapshot(&self, t: SimInstant) -> TopologySnapshot {
        let mut prev = vec![None; self.gs_pos.len()];
        if self.needs_history() {
            let step = self.scenario.step_ms();
            let mut k = 0;
            while k * step < t.offset_ms() {
                let f = self.frame(SimInstant::new(t.epoch(), k * step));
                prev = self.choose_gsls(&f, &prev);
                k += 1;
            }
        }
        let f = self.frame(t);
        let sel = self.choose_gsls(&f, &prev);
        self.assemble(&f, &sel)
    }
}

/// Convenience wrapper: validates the scenario and evaluates one instant.
pub fn snapshot(scenario: &Scenario, t: SimInstant) -> Result<TopologySnapshot> {
    Ok(Constellation::new(scenario)?.snapshot(t))
}
