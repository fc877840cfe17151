//! Export ten minutes of the WetLinks slice as CZML for a globe viewer.

use orbitemu::bench::{export_viz, scenario_wetlinks};
use orbitemu::trace::precompute;

fn main() -> orbitemu::Result<()> {
    let mut sc = scenario_wetlinks().scenario;
    sc.duration_seconds = 600.0;
    let trace = precompute(&sc, 2)?;
    let doc = export_viz(&trace, &sc, 30.0)?;
    let out = std::env::args().nth(1).unwrap_or_else(|| "wetlinks.czml".into());
    std::fs::write(&out, serde_json::to_vec(&doc)?).map_err(|e| orbitemu::Error::io(&out, e))?;
    println!("{out}: {} packets", doc.as_array().map_or(0, |a| a.len()));
    Ok(())
}
