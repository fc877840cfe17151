//! Two namespaces joined by a shaped veth pair. Needs root and iproute2.

use orbitemu::backends::linux::LinuxBackend;
use orbitemu::backends::Backend;
use orbitemu::topology::{LinkKey, LinkProps, NodeId};

fn main() {
    let b = match LinuxBackend::probe("oeex") {
        Ok(b) => b,
        Err(e) => {
            println!("skipping: {e}");
            return;
        }
    };
    let (a, z) = (NodeId::Ground(0), NodeId::Ground(1));
    for n in [a, z] {
        b.create_node(n, "host").unwrap();
        b.start_node(n).unwrap();
    }
    let k = LinkKey::new(a, z);
    b.add_link(k, &LinkProps { delay_us: 5000, loss_pct: 0.0, rate_mbps: 100.0 }).unwrap();
    println!("RTT over a 5 ms link: {:?} ms", b.ping_rtt_ms(k, 5).unwrap());
    b.update_link(k, &LinkProps { delay_us: 20000, loss_pct: 0.0, rate_mbps: 100.0 }).unwrap();
    println!("after update to 20 ms: {:?} ms", b.ping_rtt_ms(k, 5).unwrap());
    orbitemu::engine::tear_down(&b).unwrap();
}
