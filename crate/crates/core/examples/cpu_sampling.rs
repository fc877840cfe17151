//! Host-wide user/kernel CPU split while a replay runs in the background.

use std::thread;
use std::time::Duration;

use orbitemu::backends::SimulatedBackend;
use orbitemu::bench::{bench_updates, sample_cpu, CpuSeries, UpdateBenchOptions};
use orbitemu::engine::Pace;

fn main() -> orbitemu::Result<()> {
    let load = thread::spawn(|| {
        let opts = UpdateBenchOptions { duration_s: 600.0, pace: Pace::Realtime(200.0), ..Default::default() };
        bench_updates(&[20], &opts, || Ok(SimulatedBackend::default()))
    });
    match sample_cpu(&[std::process::id()], Duration::from_millis(500), Duration::from_secs(3))? {
        CpuSeries::Sampled { samples, truncated } => {
            for s in &samples {
                println!("{:>5.2} s  user {:>6.1}%  kernel {:>6.1}%", s.t_wall, s.user_pct, s.kernel_pct);
            }
            if truncated {
                println!("(process exited early)");
            }
        }
        CpuSeries::Unsupported { reason } => println!("unsupported: {reason}"),
    }
    load.join().unwrap()?;
    Ok(())
}
