//! One simulated hour of the WetLinks measurement plan; writes
//! measurements.csv and handovers.csv to the current directory.

use std::fs::File;

use orbitemu::backends::{write_measurements_csv, MeasurementKind};
use orbitemu::bench::{fidelity_run, scenario_wetlinks, write_handovers_csv, FidelityOptions};
use orbitemu::trace::precompute;

fn main() -> orbitemu::Result<()> {
    let p = scenario_wetlinks();
    let trace = precompute(&p.scenario, 4)?;
    let rep = fidelity_run(&p.scenario, &trace, &p.plan, &FidelityOptions::default())?;
    for r in rep.records.iter().filter(|r| r.kind == MeasurementKind::Ping).take(5) {
        let first = r.samples.first().map_or(f64::NAN, |s| s.value / 1000.0);
        println!("t={:>5.0} s  first RTT {first:.2} ms  loss {:.1}%  hops {:?}", r.t_start_s, r.loss_pct, r.path_hops);
    }
    for h in rep.handovers.iter().take(5) {
        println!("handover at {:>5.0} s on {}: {:?} -> {:?}", h.t_offset_s, h.ground_station, h.from, h.to);
    }
    println!("{} records, {} handovers", rep.records.len(), rep.handovers.len());
    write_measurements_csv(&rep.records, File::create("measurements.csv").unwrap())?;
    write_handovers_csv(&rep.handovers, File::create("handovers.csv").unwrap())?;
    Ok(())
}
