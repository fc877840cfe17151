//! Per-step apply lag, trace replay against online computation, for
//! growing constellations on the simulated backend.

use orbitemu::backends::SimulatedBackend;
use orbitemu::bench::{bench_updates, write_updates_csv, UpdateBenchOptions, UpdateMode, DEFAULT_SIZES};
use orbitemu::engine::Pace;

fn main() -> orbitemu::Result<()> {
    let mut runs = Vec::new();
    for mode in [UpdateMode::Trace, UpdateMode::Online] {
        // 5 s steps at 50x: each step must land within its 100 ms slot
        let opts = UpdateBenchOptions {
            duration_s: 200.0,
            pace: Pace::Realtime(50.0),
            mode,
            workers: 2,
            ..Default::default()
        };
        runs.extend(bench_updates(&DEFAULT_SIZES, &opts, || Ok(SimulatedBackend::default()))?);
    }
    write_updates_csv(&runs, std::io::stdout())?;
    Ok(())
}
