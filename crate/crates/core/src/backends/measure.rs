//! Ping and throughput models evaluated over a [`NetGraph`].

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{shortest_path, NetGraph, PathInfo};
use crate::error::{Error, Result};
use crate::topology::{LinkKey, NodeId};

/// Forwarding cost added per hop, each way.
pub const DEFAULT_PER_HOP_PROCESSING_US: u64 = 100;

/// Something that can present the network as it is at a simulated time.
pub trait GraphSource {
    fn with_graph_at<R>(&mut self, t_offset_s: f64, f: impl FnOnce(&NetGraph) -> R) -> R;
}

impl GraphSource for NetGraph {
    fn with_graph_at<R>(&mut self, _t_offset_s: f64, f: impl FnOnce(&NetGraph) -> R) -> R {
        f(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Ping,
    Throughput,
}

impl MeasurementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementKind::Ping => "ping",
            MeasurementKind::Throughput => "throughput",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_offset_s: f64,
    pub value: f64,
    pub hops: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub kind: MeasurementKind,
    pub label: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub t_start_s: f64,
    /// Probes or intervals requested.
    pub requested: u32,
    pub unit: String,
    /// RTT per answered probe (µs), or goodput per one-second interval (Mbps).
    pub samples: Vec<Sample>,
    pub loss_pct: f64,
    pub path_hops: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PingParams {
    pub count: u32,
    pub interval_s: f64,
    pub per_hop_processing_us: u64,
    pub seed: u64,
}

impl Default for PingParams {
    fn default() -> Self {
        PingParams { count: 250, interval_s: 0.1, per_hop_processing_us: DEFAULT_PER_HOP_PROCESSING_US, seed: 0 }
    }
}

/// One-direction loss probability of a route, links dropping independently.
pub fn path_loss_fraction(g: &NetGraph, path: &PathInfo) -> f64 {
    let keep: f64 = path.links.iter().map(|k| 1.0 - g.link(k).map_or(100.0, |p| p.loss_pct) / 100.0).product();
    1.0 - keep
}

/// Sends `count` echo probes; probe `i` leaves at `t_start_s + i·interval`
/// and sees the graph of that instant.
pub fn sim_ping<S: GraphSource>(
    source: &mut S,
    src: NodeId,
    dst: NodeId,
    t_start_s: f64,
    params: &PingParams,
) -> MeasurementRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::new();
    let mut first_hops = None;
    for i in 0..params.count {
        let t = t_start_s + f64::from(i) * params.interval_s;
        let route = source.with_graph_at(t, |g| {
            shortest_path(g, src, dst).map(|p| {
                let loss = path_loss_fraction(g, &p);
                (p.hops, p.delay_us, loss)
            })
        });
        // both draws happen for every probe so later probes do not depend
        // on whether earlier ones had a route
        let (fwd, back): (f64, f64) = (rng.gen(), rng.gen());
        let Some((hops, delay, loss)) = route else { continue };
        first_hops.get_or_insert(hops);
        if fwd < loss || back < loss {
            continue;
        }
        let rtt = 2 * (delay + u64::from(hops) * params.per_hop_processing_us);
        samples.push(Sample { t_offset_s: t, value: rtt as f64, hops: Some(hops) });
    }
    let lost = params.count as usize - samples.len();
    MeasurementRecord {
        kind: MeasurementKind::Ping,
        label: "ping".into(),
        src,
        dst,
        t_start_s,
        requested: params.count,
        unit: "us".into(),
        loss_pct: 100.0 * lost as f64 / f64::from(params.count.max(1)),
        samples,
        path_hops: first_hops,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Client sends to server.
    Uplink,
    /// Server sends to client.
    Downlink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputSession {
    pub label: String,
    pub client: NodeId,
    pub server: NodeId,
    pub direction: Direction,
    pub target_mbps: f64,
}

impl ThroughputSession {
    fn endpoints(&self) -> (NodeId, NodeId) {
        match self.direction {
            Direction::Uplink => (self.client, self.server),
            Direction::Downlink => (self.server, self.client),
        }
    }
}

/// Runs concurrent goodput sessions for `duration_s` one-second intervals.
///
/// Per interval each session gets `min(target, bottleneck rate, GSL share)`
/// scaled by the route's one-way delivery probability. With `contention`
/// every GSL's rate is split equally among the sessions crossing it.
/// Intervals without a route report 0.
pub fn sim_throughput_sessions<S: GraphSource>(
    source: &mut S,
    sessions: &[ThroughputSession],
    t_start_s: f64,
    duration_s: u32,
    contention: bool,
) -> Vec<MeasurementRecord> {
    let mut records: Vec<MeasurementRecord> = sessions
        .iter()
        .map(|s| {
            let (src, dst) = s.endpoints();
            MeasurementRecord {
                kind: MeasurementKind::Throughput,
                label: s.label.clone(),
                src,
                dst,
                t_start_s,
                requested: duration_s,
                unit: "Mbps".into(),
                samples: Vec::with_capacity(duration_s as usize),
                loss_pct: 0.0,
                path_hops: None,
            }
        })
        .collect();
    let mut loss_sum = vec![(0.0, 0u32); sessions.len()];
    for i in 0..duration_s {
        let t = t_start_s + f64::from(i);
        let rates = source.with_graph_at(t, |g| interval_goodput(g, sessions, contention));
        for (j, r) in rates.into_iter().enumerate() {
            let (value, hops) = match r {
                Some((mbps, loss, hops)) => {
                    loss_sum[j].0 += loss;
                    loss_sum[j].1 += 1;
                    records[j].path_hops.get_or_insert(hops);
                    (mbps, Some(hops))
                }
                None => (0.0, None),
            };
            records[j].samples.push(Sample { t_offset_s: t, value, hops });
        }
    }
    for (r, (sum, n)) in records.iter_mut().zip(loss_sum) {
        r.loss_pct = if n == 0 { 100.0 } else { 100.0 * sum / f64::from(n) };
    }
    records
}

fn interval_goodput(g: &NetGraph, sessions: &[ThroughputSession], contention: bool) -> Vec<Option<(f64, f64, u32)>> {
    let paths: Vec<Option<PathInfo>> = sessions
        .iter()
        .map(|s| {
            let (a, b) = s.endpoints();
            shortest_path(g, a, b)
        })
        .collect();
    let mut gsl_users: BTreeMap<LinkKey, u32> = BTreeMap::new();
    if contention {
        for p in paths.iter().flatten() {
            for k in p.links.iter().filter(|k| k.is_gsl()) {
                *gsl_users.entry(*k).or_default() += 1;
            }
        }
    }
    sessions
        .iter()
        .zip(&paths)
        .map(|(s, p)| {
            let p = p.as_ref()?;
            let mut cap = s.target_mbps;
            for k in &p.links {
                let rate = g.link(k).map_or(0.0, |l| l.rate_mbps);
                let share = match gsl_users.get(k) {
                    Some(n) => rate / f64::from(*n),
                    None => rate,
                };
                cap = cap.min(share);
            }
            let loss = path_loss_fraction(g, p);
            Some((cap * (1.0 - loss), loss, p.hops))
        })
        .collect()
}

/// Single-session form of [`sim_throughput_sessions`], without contention.
pub fn sim_throughput<S: GraphSource>(
    source: &mut S,
    client: NodeId,
    server: NodeId,
    target_mbps: f64,
    t_start_s: f64,
    duration_s: u32,
    direction: Direction,
) -> MeasurementRecord {
    let s = ThroughputSession {
        label: match direction {
            Direction::Uplink => "uplink".into(),
            Direction::Downlink => "downlink".into(),
        },
        client,
        server,
        direction,
        target_mbps,
    };
    sim_throughput_sessions(source, &[s], t_start_s, duration_s, false).remove(0)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    kind: &'a str,
    t_offset_s: f64,
    value: f64,
    unit: &'a str,
    hops: Option<u32>,
    session: &'a str,
}

/// Writes one row per sample: `kind,t_offset_s,value,unit,hops,session`.
pub fn write_measurements_csv(records: &[MeasurementRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        for s in &r.samples {
            out.serialize(CsvRow {
                kind: r.kind.as_str(),
                t_offset_s: s.t_offset_s,
                value: s.value,
                unit: &r.unit,
                hops: s.hops,
                session: &r.label,
            })
            .map_err(|e| Error::config(format!("csv: {e}")))?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::SatelliteId;
    use crate::topology::LinkProps;

    fn sat(i: u16) -> NodeId {
        NodeId::Sat(SatelliteId::new(0, 0, i))
    }

    fn graph(links: &[(NodeId, NodeId, LinkProps)]) -> NetGraph {
        let mut g = NetGraph::default();
        for (a, b, p) in links {
            for n in [a, b] {
                if g.node_state(n).is_none() {
                    g.create_node(*n, "").unwrap();
                    g.start_node(*n).unwrap();
                }
            }
            g.add_link(LinkKey::new(*a, *b), p).unwrap();
        }
        g
    }

    fn lp(delay_us: u64, loss_pct: f64, rate_mbps: f64) -> LinkProps {
        LinkProps { delay_us, loss_pct, rate_mbps }
    }

    #[test]
    fn single_link_rtt() {
        let mut g = graph(&[(sat(0), sat(1), lp(2000, 0.0, 100.0))]);
        let p = PingParams { count: 10, interval_s: 0.1, per_hop_processing_us: 0, seed: 3 };
        let r = sim_ping(&mut g, sat(0), sat(1), 0.0, &p);
        assert_eq!(r.samples.len(), 10);
        assert!(r.samples.iter().all(|s| s.value == 4000.0));
        assert_eq!(r.loss_pct, 0.0);
        let p = PingParams { per_hop_processing_us: 100, ..p };
        let r = sim_ping(&mut g, sat(0), sat(1), 0.0, &p);
        assert!(r.samples.iter().all(|s| s.value == 4200.0));
    }

    #[test]
    fn two_lossy_links_compose() {
        let g = graph(&[(sat(0), sat(1), lp(1, 1.0, 10.0)), (sat(1), sat(2), lp(1, 1.0, 10.0))]);
        let p = shortest_path(&g, sat(0), sat(2)).unwrap();
        assert!((path_loss_fraction(&g, &p) - 0.0199).abs() < 1e-12);
    }

    #[test]
    fn bent_pipe_rtt() {
        let (gs1, gs2, s) = (NodeId::Ground(0), NodeId::Ground(1), sat(0));
        let mut g = graph(&[(gs1, s, lp(2000, 0.0, 1000.0)), (s, gs2, lp(2000, 0.0, 1000.0))]);
        let proc_us = 100;
        let p = PingParams { count: 5, interval_s: 0.1, per_hop_processing_us: proc_us, seed: 0 };
        let r = sim_ping(&mut g, gs1, gs2, 0.0, &p);
        assert_eq!(r.path_hops, Some(2));
        assert!(r.samples.iter().all(|x| x.value == (8000 + 2 * 2 * proc_us) as f64));
    }

    #[test]
    fn observed_loss_tracks_model() {
        let mut g = graph(&[(sat(0), sat(1), lp(10, 10.0, 10.0))]);
        let p = PingParams { count: 20_000, interval_s: 0.0, per_hop_processing_us: 0, seed: 11 };
        let r = sim_ping(&mut g, sat(0), sat(1), 0.0, &p);
        // round trip drops with 1 - 0.9^2 = 19 %
        assert!((r.loss_pct - 19.0).abs() < 1.0, "{}", r.loss_pct);
        assert_eq!(r.samples.len() as u32 + (r.loss_pct / 100.0 * 20_000.0).round() as u32, 20_000);
    }

    #[test]
    fn seeded_pings_repeat() {
        let mut g = graph(&[(sat(0), sat(1), lp(10, 30.0, 10.0))]);
        let p = PingParams { count: 200, interval_s: 0.1, per_hop_processing_us: 0, seed: 5 };
        let a = sim_ping(&mut g, sat(0), sat(1), 0.0, &p);
        let b = sim_ping(&mut g, sat(0), sat(1), 0.0, &p);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = sim_ping(&mut g, sat(0), sat(1), 0.0, &PingParams { seed: 6, ..p });
        assert_ne!(a, c);
    }

    #[test]
    fn throughput_capped_by_target_and_loss() {
        let mut g = graph(&[(sat(0), sat(1), lp(10, 1.0, 10_000.0))]);
        let r = sim_throughput(&mut g, sat(0), sat(1), 100.0, 0.0, 10, Direction::Uplink);
        assert_eq!(r.samples.len(), 10);
        // min(100, 10000) * (1 - 0.01)
        assert!(r.samples.iter().all(|s| (s.value - 99.0).abs() < 1e-9));
        let mut g = graph(&[(sat(0), sat(1), lp(10, 100.0, 10_000.0))]);
        let r = sim_throughput(&mut g, sat(0), sat(1), 100.0, 0.0, 3, Direction::Downlink);
        assert!(r.samples.iter().all(|s| s.value == 0.0));
    }

    #[test]
    fn contention_shares_gsl() {
        let (gs1, gs2, s) = (NodeId::Ground(0), NodeId::Ground(1), sat(0));
        let mut g = graph(&[(gs1, s, lp(10, 0.0, 500.0)), (s, gs2, lp(10, 0.0, 10_000.0))]);
        let sessions = [
            ThroughputSession {
                label: "a".into(),
                client: gs1,
                server: gs2,
                direction: Direction::Uplink,
                target_mbps: 1000.0,
            },
            ThroughputSession {
                label: "b".into(),
                client: gs1,
                server: gs2,
                direction: Direction::Downlink,
                target_mbps: 1000.0,
            },
        ];
        let on = sim_throughput_sessions(&mut g, &sessions, 0.0, 2, true);
        for r in &on {
            assert!(r.samples.iter().all(|x| x.value == 250.0));
        }
        let off = sim_throughput_sessions(&mut g, &sessions, 0.0, 2, false);
        for r in &off {
            assert!(r.samples.iter().all(|x| x.value == 500.0));
        }
    }

    #[test]
    fn unreachable_throughput_zero_filled() {
        let mut g = graph(&[(sat(0), sat(1), lp(10, 0.0, 10.0))]);
        g.create_node(sat(5), "").unwrap();
        let r = sim_throughput(&mut g, sat(0), sat(5), 10.0, 0.0, 4, Direction::Uplink);
        assert_eq!(r.samples.len(), 4);
        assert!(r.samples.iter().all(|x| x.value == 0.0 && x.hops.is_none()));
    }

    #[test]
    fn csv_layout() {
        let mut g = graph(&[(sat(0), sat(1), lp(1000, 0.0, 10.0))]);
        let p = PingParams { count: 2, interval_s: 0.5, per_hop_processing_us: 0, seed: 0 };
        let r = sim_ping(&mut g, sat(0), sat(1), 10.0, &p);
        let mut buf = Vec::new();
        write_measurements_csv(&[r], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "kind,t_offset_s,value,unit,hops,session\nping,10.0,2000.0,us,1,ping\nping,10.5,2000.0,us,1,ping\n"
        );
    }
}
