//! Kernel-backed backend: one network namespace per node, one veth pair per
//! link, delay/loss/rate enforced with netem on both ends of the pair.
//!
//! Requires Linux, `ip` and `tc` from iproute2, and CAP_NET_ADMIN.
//! [`LinuxBackend::probe`] reports [`BackendError::Unsupported`] otherwise.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Mutex;

use super::{Backend, BackendError};
use crate::topology::{LinkKey, LinkProps, NodeId, NodeState};

#[derive(Debug, Clone)]
struct LinkSlot {
    index: u32,
    addr_b: String,
}

#[derive(Debug, Default)]
struct State {
    nodes: BTreeMap<NodeId, NodeState>,
    links: BTreeMap<LinkKey, LinkSlot>,
    next_link: u32,
}

#[derive(Debug)]
pub struct LinuxBackend {
    prefix: String,
    state: Mutex<State>,
}

fn run(args: &[&str]) -> Result<String, BackendError> {
    let out = Command::new(args[0])
        .args(&args[1..])
        .output()
        .map_err(|e| BackendError::Unsupported(format!("{}: {e}", args[0])))?;
    if !out.status.success() {
        return Err(BackendError::Command(format!(
            "{}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn link_addr(index: u32, host: u32) -> String {
    let base = index * 4 + host;
    format!("10.{}.{}.{}", (base >> 16) & 0xff, (base >> 8) & 0xff, base & 0xff)
}

fn netem_args(props: &LinkProps) -> Vec<String> {
    vec![
        "netem".into(),
        "delay".into(),
        format!("{}us", props.delay_us),
        "loss".into(),
        format!("{}%", props.loss_pct),
        "rate".into(),
        format!("{}mbit", props.rate_mbps),
    ]
}

impl LinuxBackend {
    /// Checks that namespaces can be created here; `prefix` namespaces all
    /// objects this backend creates.
    pub fn probe(prefix: &str) -> Result<Self, BackendError> {
        if !cfg!(target_os = "linux") {
            return Err(BackendError::Unsupported("not a Linux host".into()));
        }
        let probe = format!("{prefix}probe");
        let unsupported = |e: BackendError| match e {
            BackendError::Unsupported(_) => e,
            other => BackendError::Unsupported(other.to_string()),
        };
        run(&["ip", "netns", "add", &probe]).map_err(unsupported)?;
        let _ = run(&["ip", "netns", "del", &probe]);
        run(&["tc", "-V"]).map_err(unsupported)?;
        Ok(LinuxBackend { prefix: prefix.to_owned(), state: Mutex::new(State::default()) })
    }

    fn netns(&self, n: NodeId) -> String {
        match n {
            NodeId::Ground(i) => format!("{}g{i}", self.prefix),
            NodeId::Sat(s) => format!("{}s{}-{}-{}", self.prefix, s.shell, s.plane, s.slot),
        }
    }

    fn ifname(&self, index: u32, side: char) -> String {
        format!("oe{index}{side}")
    }

    fn set_state(&self, id: NodeId, op: &'static str, from: NodeState, to: NodeState) -> Result<(), BackendError> {
        let mut st = self.state.lock().unwrap();
        let cur = st.nodes.get_mut(&id).ok_or(BackendError::NoSuchNode(id))?;
        if *cur != from {
            return Err(BackendError::InvalidTransition { node: id, op, state: "other" });
        }
        *cur = to;
        Ok(())
    }

    fn netem(&self, verb: &str, key: LinkKey, slot: &LinkSlot, props: &LinkProps) -> Result<(), BackendError> {
        for (node, side) in [(key.a(), 'a'), (key.b(), 'b')] {
            let ns = self.netns(node);
            let dev = self.ifname(slot.index, side);
            let mut args: Vec<String> =
                ["ip", "netns", "exec", &ns, "tc", "qdisc", verb, "dev", &dev, "root"].map(String::from).into();
            args.extend(netem_args(props));
            run(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        Ok(())
    }

    /// Average RTT in milliseconds measured with the system `ping` across a link,
    /// or `None` when every probe was lost.
    pub fn ping_rtt_ms(&self, key: LinkKey, count: u32) -> Result<Option<f64>, BackendError> {
        let slot = self.state.lock().unwrap().links.get(&key).cloned().ok_or(BackendError::NoSuchLink(key))?;
        let ns = self.netns(key.a());
        let count = count.to_string();
        let out = Command::new("ip")
            .args(["netns", "exec", &ns, "ping", "-q", "-c", &count, "-i", "0.2", "-W", "1", &slot.addr_b])
            .output()
            .map_err(|e| BackendError::Command(e.to_string()))?;
        let text = String::from_utf8_lossy(&out.stdout);
        Ok(text
            .lines()
            .find(|l| l.contains("min/avg/max"))
            .and_then(|l| l.split('=').nth(1))
            .and_then(|v| v.trim().split('/').nth(1))
            .and_then(|v| v.parse().ok()))
    }
}

impl Backend for LinuxBackend {
    fn name(&self) -> &'static str {
        "linux"
    }

    fn create_node(&self, id: NodeId, _profile: &str) -> Result<(), BackendError> {
        if self.state.lock().unwrap().nodes.contains_key(&id) {
            return Err(BackendError::NodeExists(id));
        }
        run(&["ip", "netns", "add", &self.netns(id)])?;
        self.state.lock().unwrap().nodes.insert(id, NodeState::Created);
        Ok(())
    }

    fn start_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.set_state(id, "start", NodeState::Created, NodeState::Started)?;
        run(&["ip", "-n", &self.netns(id), "link", "set", "lo", "up"]).map(drop)
    }

    fn suspend_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.set_state(id, "suspend", NodeState::Started, NodeState::Suspended)?;
        run(&["ip", "-n", &self.netns(id), "link", "set", "lo", "down"]).map(drop)
    }

    fn resume_node(&self, id: NodeId) -> Result<(), BackendError> {
        self.set_state(id, "resume", NodeState::Suspended, NodeState::Started)?;
        run(&["ip", "-n", &self.netns(id), "link", "set", "lo", "up"]).map(drop)
    }

    fn destroy_node(&self, id: NodeId) -> Result<(), BackendError> {
        {
            let mut st = self.state.lock().unwrap();
            st.nodes.remove(&id).ok_or(BackendError::NoSuchNode(id))?;
            st.links.retain(|k, _| k.a() != id && k.b() != id);
        }
        run(&["ip", "netns", "del", &self.netns(id)]).map(drop)
    }

    fn add_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        let slot = {
            let mut st = self.state.lock().unwrap();
            for n in [key.a(), key.b()] {
                if !st.nodes.contains_key(&n) {
                    return Err(BackendError::NoSuchNode(n));
                }
            }
            if st.links.contains_key(&key) {
                return Err(BackendError::LinkExists(key));
            }
            let index = st.next_link;
            st.next_link += 1;
            LinkSlot { index, addr_b: link_addr(index, 2) }
        };
        let (na, nb) = (self.netns(key.a()), self.netns(key.b()));
        let (ia, ib) = (self.ifname(slot.index, 'a'), self.ifname(slot.index, 'b'));
        run(&["ip", "link", "add", &ia, "netns", &na, "type", "veth", "peer", "name", &ib, "netns", &nb])?;
        let addr_a = format!("{}/30", link_addr(slot.index, 1));
        let addr_b = format!("{}/30", slot.addr_b);
        for (ns, dev, addr) in [(&na, &ia, &addr_a), (&nb, &ib, &addr_b)] {
            run(&["ip", "-n", ns, "addr", "add", addr, "dev", dev])?;
            run(&["ip", "-n", ns, "link", "set", dev, "up"])?;
        }
        self.netem("add", key, &slot, props)?;
        self.state.lock().unwrap().links.insert(key, slot);
        Ok(())
    }

    fn remove_link(&self, key: LinkKey) -> Result<(), BackendError> {
        let Some(slot) = self.state.lock().unwrap().links.remove(&key) else {
            return Ok(());
        };
        run(&["ip", "-n", &self.netns(key.a()), "link", "del", &self.ifname(slot.index, 'a')]).map(drop)
    }

    fn update_link(&self, key: LinkKey, props: &LinkProps) -> Result<(), BackendError> {
        let slot = self.state.lock().unwrap().links.get(&key).cloned().ok_or(BackendError::NoSuchLink(key))?;
        self.netem("change", key, &slot, props)
    }

    fn nodes(&self) -> Vec<NodeId> {
        self.state.lock().unwrap().nodes.keys().copied().collect()
    }

    fn links(&self) -> Vec<LinkKey> {
        self.state.lock().unwrap().links.keys().copied().collect()
    }
}

impl Drop for LinuxBackend {
    fn drop(&mut self) {
        let nodes: Vec<NodeId> = self.state.lock().unwrap().nodes.keys().copied().collect();
        for n in nodes {
            let _ = run(&["ip", "netns", "del", &self.netns(n)]);
        }
    }
}
