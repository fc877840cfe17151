use std::time::Instant;

use proptest::prelude::*;

use orbitemu::backends::{SimulatedBackend, TopologyMode};
use orbitemu::bench::scenario_wetlinks;
use orbitemu::engine::{Engine, NodeProfiles, Pace};
use orbitemu::orbits::ShellConfig;
use orbitemu::topology::{snapshot, BoundingBox, GroundStationConfig, LinkDefaults, NodeState, Scenario};
use orbitemu::trace::{apply, precompute, read_trace, write_trace, TraceFile};

fn small(planes: u32, per_plane: u32, arc_frac: f64, bbox: Option<BoundingBox>, duration: f64) -> Scenario {
    let mut shell = ShellConfig::new(planes, per_plane, 53.0);
    shell.raan_arc_rad = arc_frac * std::f64::consts::TAU;
    Scenario {
        epoch: "2024-03-01T12:00:00Z".into(),
        step_seconds: 10.0,
        duration_seconds: duration,
        shells: vec![shell],
        ground_stations: vec![
            GroundStationConfig::new("north", 50.0, 10.0).unwrap(),
            GroundStationConfig::new("south", -33.9, 18.4).unwrap(),
        ],
        link_defaults: LinkDefaults::default(),
        bounding_box: bbox,
        gsl_contention: false,
        delay_quantum_us: 0,
        node_budget: 2000,
        link_budget: 8000,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn folded_trace_equals_snapshots(
        planes in 2u32..8,
        per_plane in 3u32..10,
        full in any::<bool>(),
        lat_min in -60.0f64..0.0,
        lon_min in -180.0f64..180.0,
        lon_span in 30.0f64..300.0,
    ) {
        let bbox = BoundingBox { lat_min, lat_max: lat_min + 80.0, lon_min, lon_max: lon_min + lon_span };
        let sc = small(planes, per_plane, if full { 1.0 } else { 0.3 }, Some(bbox), 600.0);
        let trace = precompute(&sc, 2).unwrap();
        let mut state = orbitemu::topology::TopologySnapshot::empty();
        for d in &trace.diffs {
            apply(&mut state, d).unwrap();
            let want = snapshot(&sc, sc.instant(d.step_index)).unwrap();
            prop_assert_eq!(&state.nodes, &want.nodes);
            prop_assert_eq!(&state.isl_links, &want.isl_links);
            prop_assert_eq!(&state.gsl_links, &want.gsl_links);
        }
    }
}

#[test]
fn file_round_trip_then_replay_on_simulated_backend() {
    let sc = small(6, 8, 1.0, Some(BoundingBox { lat_min: 0.0, lat_max: 90.0, lon_min: -40.0, lon_max: 60.0 }), 900.0);
    let trace = precompute(&sc, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    write_trace(&trace, &path).unwrap();
    let back: TraceFile = read_trace(&path, Some(&sc)).unwrap();
    assert_eq!(back, trace);

    let sim = SimulatedBackend::new(TopologyMode::Grid);
    let mut engine = Engine::new(&sim, NodeProfiles::default(), 4).unwrap();
    engine.bring_up(&back).unwrap();
    engine.run(&back, Pace::Unpaced).unwrap();
    let last = snapshot(&sc, sc.instant(sc.step_count())).unwrap();
    let g = sim.graph();
    let links: Vec<_> = last.links().map(|(k, p)| (*k, *p)).collect();
    let got: Vec<_> = g.link_map().iter().map(|(k, p)| (*k, *p)).collect();
    assert_eq!(got, links);
    for (n, st) in &last.nodes {
        let s = g.node_state(n).unwrap();
        assert!(s == *st || (s == NodeState::Created && *st == NodeState::Suspended), "{n}: {s:?} vs {st:?}");
    }
}

#[test]
fn precompute_scales_with_workers() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("skipping: {cores} core(s) available, need 4");
        return;
    }
    let sc = scenario_wetlinks().scenario;
    let time = |w| {
        let t = Instant::now();
        precompute(&sc, w).unwrap();
        t.elapsed().as_secs_f64()
    };
    time(4);
    let (one, four) = (time(1), time(4));
    assert!(one / four > 1.8, "1 worker {one:.3} s, 4 workers {four:.3} s");
}
