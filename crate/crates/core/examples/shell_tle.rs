//! Generate a Walker shell and print the first satellites as TLEs.
//!
//!     cargo run --example shell_tle -- 72 22 53

use orbitemu::geo::SimInstant;
use orbitemu::orbits::{export_tle, generate_shell, propagate, ShellConfig};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (planes, per_plane, inc) = match args[..] {
        [p, s, i] => (p as u32, s as u32, i),
        _ => (72, 22, 53.0),
    };
    let cfg = ShellConfig::new(planes, per_plane, inc);
    let epoch = SimInstant::parse_epoch("2023-09-15T00:00:00Z").unwrap();
    let sats = generate_shell(0, &cfg);
    println!("{} satellites, period {:.1} s", sats.len(), sats[0].1.period_s());
    for (id, el) in sats.iter().take(3) {
        let [l1, l2] = export_tle(id, el, epoch);
        println!("{id}\n{l1}\n{l2}");
        let p = propagate(el, &SimInstant::new(epoch, 600_000));
        println!("  after 10 min: ({:.0}, {:.0}, {:.0}) m ECEF", p.x_m, p.y_m, p.z_m);
    }
}
