//! Precompute the WetLinks-slice trace and write it to disk.
//!
//!     cargo run --release --example precompute_trace -- trace.jsonl 4

use orbitemu::bench::scenario_wetlinks;
use orbitemu::trace::{precompute_with_progress, read_trace, write_trace};

fn main() -> orbitemu::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "trace.jsonl".into());
    let workers = args.next().and_then(|w| w.parse().ok()).unwrap_or(4);
    let sc = scenario_wetlinks().scenario;
    let trace = precompute_with_progress(&sc, workers, |done, total| {
        if done == total {
            eprintln!("{done}/{total} steps");
        }
    })?;
    write_trace(&trace, &out)?;
    let back = read_trace(&out, Some(&sc))?;
    let ops: usize = back.diffs.iter().skip(1).map(|d| d.len()).sum();
    println!(
        "{out}: {} steps, {} ops after bring-up, digest {}",
        back.header.step_count, ops, back.header.scenario_digest
    );
    Ok(())
}
