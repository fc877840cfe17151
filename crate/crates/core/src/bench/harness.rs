//! Bring-up and update-lag scaling runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::presets::scaling_scenario;
use crate::backends::Backend;
use crate::engine::{percentile, tear_down, Engine, NodeProfiles, Pace, StepReport};
use crate::error::{Error, Result};
use crate::topology::{Constellation, Scenario};
use crate::trace::precompute;

pub const DEFAULT_SIZES: [u32; 3] = [10, 15, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BringUpRow {
    pub planes: u32,
    pub sats_per_plane: u32,
    pub nodes: usize,
    pub links: usize,
    pub node_phase_s: f64,
    pub network_phase_s: f64,
}

/// Brings up one `planes`×22 constellation per size on a fresh backend
/// from `make_backend`, then tears it down.
pub fn bench_bringup<B: Backend>(
    sizes: &[u32],
    workers: usize,
    mut make_backend: impl FnMut() -> Result<B>,
) -> Result<Vec<BringUpRow>> {
    if sizes.is_empty() {
        return Err(Error::config("no constellation sizes given"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &planes in sizes {
        let mut sc = scaling_scenario(planes);
        sc.duration_seconds = 0.0;
        sc.validate()?;
        let trace = precompute(&sc, workers)?;
        let backend = make_backend()?;
        let rep = Engine::new(&backend, NodeProfiles::default(), 1)?.bring_up(&trace)?;
        tear_down(&backend)?;
        rows.push(BringUpRow {
            planes,
            sats_per_plane: sc.shells[0].sats_per_plane,
            nodes: rep.node_count,
            links: rep.link_count,
            node_phase_s: rep.node_phase_s,
            network_phase_s: rep.network_phase_s,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Diffs come from a precomputed trace.
    Trace,
    /// Each step's topology is computed when it is due.
    Online,
}

/// Raw per-step reports of one size; the summary rows derive from these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRun {
    pub planes: u32,
    pub mode: UpdateMode,
    pub reports: Vec<StepReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    pub planes: u32,
    pub mode: UpdateMode,
    pub steps: usize,
    pub p50_lag_ms: f64,
    pub p99_lag_ms: f64,
    pub max_lag_ms: f64,
    pub mean_ops_per_step: f64,
    pub mean_compute_ms: f64,
}

impl UpdateRun {
    pub fn summary(&self) -> UpdateRow {
        let lags: Vec<f64> = self.reports.iter().map(|r| r.lag_ms).collect();
        let n = self.reports.len().max(1) as f64;
        UpdateRow {
            planes: self.planes,
            mode: self.mode,
            steps: self.reports.len(),
            p50_lag_ms: percentile(&lags, 50.0),
            p99_lag_ms: percentile(&lags, 99.0),
            max_lag_ms: lags.iter().copied().fold(0.0, f64::max),
            mean_ops_per_step: self.reports.iter().map(|r| r.ops_applied as f64).sum::<f64>() / n,
            mean_compute_ms: self.reports.iter().map(|r| r.compute_ms).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateBenchOptions {
    pub duration_s: f64,
    pub step_s: f64,
    pub pace: Pace,
    pub mode: UpdateMode,
    pub workers: usize,
}

impl Default for UpdateBenchOptions {
    fn default() -> Self {
        UpdateBenchOptions {
            duration_s: 300.0,
            step_s: 5.0,
            pace: Pace::Realtime(1.0),
            mode: UpdateMode::Trace,
            workers: 1,
        }
    }
}

pub fn update_scenario(planes: u32, opts: &UpdateBenchOptions) -> Result<Scenario> {
    let mut sc = scaling_scenario(planes);
    sc.duration_seconds = opts.duration_s;
    sc.step_seconds = opts.step_s;
    sc.validate()?;
    Ok(sc)
}

/// Plays `duration_s` of each size against a fresh backend and keeps every
/// step report.
pub fn bench_updates<B: Backend>(
    sizes: &[u32],
    opts: &UpdateBenchOptions,
    mut make_backend: impl FnMut() -> Result<B>,
) -> Result<Vec<UpdateRun>> {
    if sizes.is_empty() {
        return Err(Error::config("no constellation sizes given"));
    }
    let mut runs = Vec::with_capacity(sizes.len());
    for &planes in sizes {
        let sc = update_scenario(planes, opts)?;
        let backend = make_backend()?;
        let reports = {
            let mut engine = Engine::new(&backend, NodeProfiles::default(), opts.workers)?;
            match opts.mode {
                UpdateMode::Trace => {
                    let trace = precompute(&sc, opts.workers)?;
                    engine.bring_up(&trace)?;
                    engine.run(&trace, opts.pace)?
                }
                UpdateMode::Online => {
                    let mut first = sc.clone();
                    first.duration_seconds = 0.0;
                    engine.bring_up(&precompute(&first, 1)?)?;
                    let c = Constellation::new(&sc)?;
                    engine.run_online(&c, sc.step_count(), opts.pace)?
                }
            }
        };
        tear_down(&backend)?;
        runs.push(UpdateRun { planes, mode: opts.mode, reports });
    }
    Ok(runs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("csv: {e}"))
}

/// Columns `planes,sats_per_plane,nodes,links,node_phase_s,network_phase_s`.
pub fn write_bringup_csv(rows: &[BringUpRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// Columns `planes,mode,steps,p50_lag_ms,p99_lag_ms,max_lag_ms,mean_ops_per_step,mean_compute_ms`.
pub fn write_updates_csv(runs: &[UpdateRun], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in runs {
        out.serialize(r.summary()).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// One JSON object per step report, tagged with size and mode.
pub fn write_step_reports_jsonl(runs: &[UpdateRun], mut w: impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        planes: u32,
        mode: UpdateMode,
        #[serde(flatten)]
        report: &'a StepReport,
    }
    for run in runs {
        for report in &run.reports {
            let line = serde_json::to_string(&Line { planes: run.planes, mode: run.mode, report })?;
            writeln!(w, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
        }
    }
    Ok(())
}

/// Inverse of [`write_step_reports_jsonl`], so the CSV can be rebuilt.
pub fn read_step_reports_jsonl(text: &str) -> Result<Vec<UpdateRun>> {
    #[derive(Deserialize)]
    struct Line {
        planes: u32,
        mode: UpdateMode,
        #[serde(flatten)]
        report: StepReport,
    }
    let mut runs: Vec<UpdateRun> = Vec::new();
    for l in text.lines().filter(|l| !l.trim().is_empty()) {
        let line: Line = serde_json::from_str(l)?;
        match runs.last_mut() {
            Some(r) if r.planes == line.planes && r.mode == line.mode => r.reports.push(line.report),
            _ => runs.push(UpdateRun { planes: line.planes, mode: line.mode, reports: vec![line.report] }),
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::backends::{LatencyModel, RecordingBackend, SimulatedBackend};

    #[test]
    fn three_rows_with_grid_link_counts() {
        let rows = bench_bringup(&DEFAULT_SIZES, 1, || Ok(RecordingBackend::default())).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.nodes, r.planes as usize * 22 + 2);
            // +Grid on a full arc: two ISLs per satellite, plus one GSL per covered station
            let isl = 2 * r.planes as usize * 22;
            assert!(r.links >= isl && r.links <= isl + 2, "{r:?}");
        }
        let mut buf = Vec::new();
        write_bringup_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("planes,sats_per_plane,nodes,links,node_phase_s,network_phase_s\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn node_phase_tracks_op_latency() {
        let rows =
            bench_bringup(&[10], 1, || Ok(RecordingBackend::new(LatencyModel::constant(Duration::from_millis(1)))))
                .unwrap();
        // 222 nodes, each created and started serially
        let oracle = 2.0 * 222.0 * 0.001;
        assert!(rows[0].node_phase_s >= oracle && rows[0].node_phase_s < oracle * 1.5, "{:?}", rows[0]);
    }

    #[test]
    fn empty_sizes_rejected() {
        assert!(bench_bringup(&[], 1, || Ok(RecordingBackend::default())).is_err());
    }

    #[test]
    fn csv_rebuilds_from_jsonl() {
        let opts = UpdateBenchOptions { duration_s: 60.0, pace: Pace::Unpaced, ..Default::default() };
        let runs = bench_updates(&[4, 6], &opts, || Ok(SimulatedBackend::default())).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].reports.len(), 12);
        let mut jsonl = Vec::new();
        write_step_reports_jsonl(&runs, &mut jsonl).unwrap();
        let back = read_step_reports_jsonl(std::str::from_utf8(&jsonl).unwrap()).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_updates_csv(&runs, &mut a).unwrap();
        write_updates_csv(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn online_mode_reports_compute_time() {
        let opts = UpdateBenchOptions {
            duration_s: 20.0,
            pace: Pace::Unpaced,
            mode: UpdateMode::Online,
            ..Default::default()
        };
        let runs = bench_updates(&[3], &opts, || Ok(SimulatedBackend::default())).unwrap();
        let row = runs[0].summary();
        assert_eq!(row.steps, 4);
        assert!(row.mean_compute_ms > 0.0);
    }
}
