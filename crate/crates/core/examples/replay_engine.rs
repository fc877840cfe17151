//! Bring a trace up on the recording backend and replay five minutes of
//! it at 100x real time.

use orbitemu::backends::{Backend, LatencyModel, RecordingBackend};
use orbitemu::bench::scenario_wetlinks;
use orbitemu::engine::{percentile, tear_down, Engine, NodeProfiles, Pace};
use orbitemu::trace::precompute;
use std::time::Duration;

fn main() -> orbitemu::Result<()> {
    let mut sc = scenario_wetlinks().scenario;
    sc.duration_seconds = 300.0;
    let trace = precompute(&sc, 2)?;
    let backend = RecordingBackend::new(LatencyModel::constant(Duration::from_micros(50)));
    let mut engine = Engine::new(&backend, NodeProfiles::default(), 2)?;
    let up = engine.bring_up(&trace)?;
    println!(
        "bring-up: {} nodes in {:.3} s, {} links in {:.3} s",
        up.node_count, up.node_phase_s, up.link_count, up.network_phase_s
    );
    let reports = engine.run_with(&trace, Pace::Realtime(100.0), |r| {
        if r.step_index % 10 == 0 {
            println!("step {:>3}: {:>3} ops, lag {:.3} ms", r.step_index, r.ops_applied, r.lag_ms);
        }
    })?;
    let lags: Vec<f64> = reports.iter().map(|r| r.lag_ms).collect();
    println!("p50 {:.3} ms, p99 {:.3} ms", percentile(&lags, 50.0), percentile(&lags, 99.0));
    println!("{} ledger entries", backend.ledger().len());
    tear_down(&backend)?;
    assert!(backend.nodes().is_empty());
    Ok(())
}
