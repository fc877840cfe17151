//! Aerzen to Triunfo Pass over the full shell: shortest path through the
//! +Grid mesh versus the two-hop star abstraction.

use orbitemu::backends::{shortest_path, sim_ping, PingParams, SimulatedBackend, TopologyMode};
use orbitemu::bench::{scenario_transatlantic, TraceDriver};
use orbitemu::trace::precompute;

fn main() -> orbitemu::Result<()> {
    let p = scenario_transatlantic();
    let mut sc = p.scenario;
    sc.duration_seconds = 0.0;
    let trace = precompute(&sc, 4)?;
    let src = sc.ground_station_id("aerzen").unwrap();
    let dst = sc.ground_station_id("triunfo-pass").unwrap();
    for mode in [TopologyMode::Grid, TopologyMode::Star] {
        let sim = SimulatedBackend::new(mode);
        let mut driver = TraceDriver::new(&sim, &trace)?;
        if let Some(path) = sim.with_graph(|g| shortest_path(g, src, dst)) {
            let route: Vec<String> = path.nodes.iter().map(|n| n.to_string()).collect();
            println!("{mode:?}: {} hops, one-way {:.2} ms", path.hops, path.delay_us as f64 / 1000.0);
            println!("  {}", route.join(" -> "));
        }
        let params = PingParams { count: 20, ..Default::default() };
        let ping = sim_ping(&mut driver, src, dst, 0.0, &params);
        let mean = ping.samples.iter().map(|s| s.value).sum::<f64>() / ping.samples.len().max(1) as f64;
        println!("  ping: mean RTT {:.2} ms, loss {:.0}%", mean / 1000.0, ping.loss_pct);
    }
    Ok(())
}
