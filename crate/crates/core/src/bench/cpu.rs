//! CPU utilisation from Linux process accounting, split into user and
//! kernel time the way `top` reports it.

use std::fs;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpuSample {
    /// Seconds since sampling began, at the end of the interval.
    pub t_wall: f64,
    pub user_pct: f64,
    /// System time; for the whole-host view also irq, softirq and iowait.
    pub kernel_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CpuSeries {
    Sampled {
        samples: Vec<CpuSample>,
        /// A watched process went away before the run ended.
        truncated: bool,
    },
    Unsupported {
        reason: String,
    },
}

/// Clock ticks per second used by `/proc`. USER_HZ is 100 on every
/// mainstream Linux architecture.
const USER_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, Default)]
struct Ticks {
    user: u64,
    kernel: u64,
}

fn parse_pid_stat(text: &str) -> Option<Ticks> {
    // the command name is parenthesised and may itself contain spaces
    let rest = &text[text.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    // fields 14 and 15 of the full line; `rest` starts at field 3
    Some(Ticks { user: f.get(11)?.parse().ok()?, kernel: f.get(12)?.parse().ok()? })
}

fn parse_proc_stat(text: &str) -> Option<Ticks> {
    let line = text.lines().find(|l| l.starts_with("cpu "))?;
    let v: Vec<u64> = line.split_whitespace().skip(1).map(|x| x.parse().unwrap_or(0)).collect();
    // user nice system idle iowait irq softirq ...
    let get = |i: usize| v.get(i).copied().unwrap_or(0);
    Some(Ticks { user: get(0) + get(1), kernel: get(2) + get(4) + get(5) + get(6) })
}

fn read_ticks(pids: &[u32]) -> Option<Ticks> {
    if pids.is_empty() {
        return parse_proc_stat(&fs::read_to_string("/proc/stat").ok()?);
    }
    let mut total = Ticks::default();
    for pid in pids {
        let t = parse_pid_stat(&fs::read_to_string(format!("/proc/{pid}/stat")).ok()?)?;
        total.user += t.user;
        total.kernel += t.kernel;
    }
    Some(total)
}

/// Samples the summed CPU use of `pids` (the whole host if empty) every
/// `interval` for `duration`.
pub fn sample_cpu(pids: &[u32], interval: Duration, duration: Duration) -> Result<CpuSeries> {
    if interval.is_zero() {
        return Err(Error::config("sampling interval must be positive"));
    }
    if !cfg!(target_os = "linux") || fs::metadata("/proc/stat").is_err() {
        return Ok(CpuSeries::Unsupported { reason: "no Linux /proc accounting on this host".into() });
    }
    let start = Instant::now();
    let Some(mut prev) = read_ticks(pids) else {
        return Err(Error::config(format!("cannot read accounting for processes {pids:?}")));
    };
    let mut prev_t = start;
    let n = (duration.as_secs_f64() / interval.as_secs_f64()).floor() as u32;
    let mut samples = Vec::with_capacity(n as usize);
    for k in 1..=n {
        let due = start + interval * k;
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        let Some(cur) = read_ticks(pids) else {
            return Ok(CpuSeries::Sampled { samples, truncated: true });
        };
        let t = Instant::now();
        let dt = (t - prev_t).as_secs_f64() * USER_HZ;
        samples.push(CpuSample {
            t_wall: (t - start).as_secs_f64(),
            user_pct: 100.0 * cur.user.saturating_sub(prev.user) as f64 / dt,
            kernel_pct: 100.0 * cur.kernel.saturating_sub(prev.kernel) as f64 / dt,
        });
        prev = cur;
        prev_t = t;
    }
    Ok(CpuSeries::Sampled { samples, truncated: false })
}

/// Columns `t_wall,user_pct,kernel_pct`.
pub fn write_cpu_csv(samples: &[CpuSample], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in samples {
        out.serialize(s).map_err(|e| Error::config(format!("csv: {e}")))?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}
