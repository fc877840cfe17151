//! Command-line front end. Every failure ends with one JSON object on
//! stderr and a nonzero exit code: 2 config, 3 I/O, 4 backend, 5 budget.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::backends::linux::LinuxBackend;
use crate::backends::{Backend, BackendKind, LatencyModel, RecordingBackend, SimulatedBackend, TopologyMode};
use crate::bench::{self, FidelityOptions, UpdateBenchOptions, UpdateMode};
use crate::engine::{tear_down, Engine, NodeProfiles, Pace, StepReport};
use crate::error::{Error, Result};
use crate::topology::{Constellation, Scenario};
use crate::trace::{precompute_with_progress, read_trace, write_trace};

#[derive(Debug, Parser)]
#[command(name = "orbitemu", version, about = "LEO constellation emulation: precompute, replay, benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by all subcommands. Any of them may also come from the
/// JSON object given with `--config`; flags on the command line win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GlobalArgs {
    /// JSON file supplying defaults for the flags below.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Simulated seconds per wall second; `inf` applies steps back to back.
    #[arg(long, global = true)]
    pub realtime_factor: Option<f64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the scenario duration, seconds.
    #[arg(long, global = true)]
    pub duration: Option<f64>,
    /// Overrides the scenario step, seconds.
    #[arg(long, global = true)]
    pub step: Option<f64>,
}

impl GlobalArgs {
    fn merged_with(self, file: GlobalArgs) -> GlobalArgs {
        GlobalArgs {
            config: self.config,
            scenario: self.scenario.or(file.scenario),
            trace: self.trace.or(file.trace),
            backend: self.backend.or(file.backend),
            workers: self.workers.or(file.workers),
            realtime_factor: self.realtime_factor.or(file.realtime_factor),
            out: self.out.or(file.out),
            seed: self.seed.or(file.seed),
            duration: self.duration.or(file.duration),
            step: self.step.or(file.step),
        }
    }

    fn resolve(self) -> Result<GlobalArgs> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: GlobalArgs =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(self.merged_with(file))
    }

    fn workers(&self) -> Result<usize> {
        match self.workers {
            Some(0) => Err(Error::config("--workers must be at least 1")),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    fn pace(&self, default: Pace) -> Result<Pace> {
        self.realtime_factor.map_or(Ok(default), Pace::from_factor)
    }

    fn require<'a>(&self, v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        v.as_deref().ok_or_else(|| Error::config(format!("{flag} is required")))
    }

    fn apply_overrides(&self, sc: &mut Scenario) -> Result<()> {
        if let Some(d) = self.duration {
            sc.duration_seconds = d;
        }
        if let Some(s) = self.step {
            sc.step_seconds = s;
        }
        sc.validate()
    }

    fn load_scenario(&self) -> Result<Scenario> {
        let mut sc = Scenario::load(self.require(&self.scenario, "--scenario")?)?;
        self.apply_overrides(&mut sc)?;
        Ok(sc)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a preset scenario as JSON.
    Gen {
        #[arg(long)]
        preset: String,
    },
    /// Compute the trace of a scenario.
    Precompute,
    /// Bring a trace up on a backend and replay it on schedule.
    Run {
        /// Compute each step when due instead of reading a trace.
        #[arg(long)]
        online: bool,
        /// Per-operation cost of the recording backend, milliseconds.
        #[arg(long, default_value_t = 0.0)]
        op_latency_ms: f64,
        #[arg(long, value_enum, default_value_t = TopologyMode::Grid)]
        topology: TopologyMode,
    },
    /// Scaling and resource benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run a measurement campaign against the simulated network.
    Fidelity {
        #[arg(value_enum)]
        preset: FidelityPreset,
        #[arg(long, value_enum, default_value_t = TopologyMode::Grid)]
        topology: TopologyMode,
    },
    /// Export satellite positions and links as CZML.
    ExportViz {
        /// Seconds between position samples; defaults to the scenario step.
        #[arg(long)]
        sample_every: Option<f64>,
    },
    /// Check a scenario file, and a trace against it.
    Validate,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Time node and network bring-up for several shell sizes.
    Bringup {
        #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
        sizes: Vec<u32>,
        #[arg(long, default_value_t = 0.0)]
        op_latency_ms: f64,
    },
    /// Measure per-step apply lag for several shell sizes.
    Updates {
        #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
        sizes: Vec<u32>,
        #[arg(long, value_enum, default_value_t = UpdateMode::Trace)]
        mode: UpdateMode,
        #[arg(long, default_value_t = 0.0)]
        op_latency_ms: f64,
    },
    /// Sample user and kernel CPU time of processes (the host if none given).
    Cpu {
        #[arg(long = "pid")]
        pids: Vec<u32>,
        #[arg(long, default_value_t = 1.0)]
        interval: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityPreset {
    Wetlinks,
    Transatlantic,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn latency(ms: f64) -> Result<LatencyModel> {
    if !(ms >= 0.0) || !ms.is_finite() {
        return Err(Error::config("--op-latency-ms must be a non-negative number"));
    }
    Ok(LatencyModel::constant(Duration::from_secs_f64(ms / 1000.0)))
}

fn make_backend(kind: BackendKind, latency: LatencyModel, mode: TopologyMode) -> Result<Box<dyn Backend>> {
    Ok(match kind {
        BackendKind::Recording => Box::new(RecordingBackend::new(latency)),
        BackendKind::Simulated => Box::new(SimulatedBackend::new(mode)),
        BackendKind::Linux => Box::new(LinuxBackend::probe("oe").map_err(|source| Error::Backend { step: 0, source })?),
    })
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global.resolve()?;
    match cli.command {
        Command::Gen { preset } => {
            let mut p = bench::preset(&preset).ok_or_else(|| {
                Error::config(format!("unknown preset {preset:?}; known: {}", bench::presets::PRESET_NAMES.join(", ")))
            })?;
            g.apply_overrides(&mut p.scenario)?;
            let text = p.scenario.pretty_json() + "\n";
            match &g.out {
                Some(path) => write_file(path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))),
                None => io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Precompute => {
            let sc = g.load_scenario()?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("trace.jsonl"));
            let mut last = 0;
            let trace = precompute_with_progress(&sc, g.workers()?, |done, total| {
                if done * 10 / total.max(1) > last {
                    last = done * 10 / total.max(1);
                    log::info!("precompute {done}/{total} steps");
                }
            })?;
            write_trace(&trace, &out)?;
            print_json(
                json!({ "trace": out, "steps": trace.header.step_count, "digest": trace.header.scenario_digest }),
            );
            Ok(())
        }
        Command::Run { online, op_latency_ms, topology } => {
            let backend = make_backend(g.backend.unwrap_or(BackendKind::Simulated), latency(op_latency_ms)?, topology)?;
            let dir = g.out_dir()?;
            let pace = g.pace(Pace::Realtime(1.0))?;
            let reports = {
                let mut engine = Engine::new(&*backend, NodeProfiles::default(), g.workers()?)?;
                if online {
                    let sc = g.load_scenario()?;
                    let mut first = sc.clone();
                    first.duration_seconds = 0.0;
                    let up = engine.bring_up(&crate::trace::precompute(&first, 1)?)?;
                    write_file(&dir.join("bringup.json"), |w| Ok(serde_json::to_writer(w, &up)?))?;
                    engine.run_online(&Constellation::new(&sc)?, sc.step_count(), pace)?
                } else {
                    let sc = match &g.scenario {
                        Some(_) => Some(g.load_scenario()?),
                        None => None,
                    };
                    let trace = read_trace(g.require(&g.trace, "--trace")?, sc.as_ref())?;
                    let up = engine.bring_up(&trace)?;
                    write_file(&dir.join("bringup.json"), |w| Ok(serde_json::to_writer(w, &up)?))?;
                    engine.run_with(&trace, pace, |r| log::debug!("step {} lag {:.3} ms", r.step_index, r.lag_ms))?
                }
            };
            tear_down(&*backend)?;
            write_step_reports(&dir, &reports)?;
            let lags: Vec<f64> = reports.iter().map(|r| r.lag_ms).collect();
            print_json(json!({
                "steps": reports.len(),
                "p50_lag_ms": crate::engine::percentile(&lags, 50.0),
                "p99_lag_ms": crate::engine::percentile(&lags, 99.0),
                "out": dir,
            }));
            Ok(())
        }
        Command::Bench(b) => run_bench(&g, b),
        Command::Fidelity { preset, topology } => {
            let p = match preset {
                FidelityPreset::Wetlinks => bench::scenario_wetlinks(),
                FidelityPreset::Transatlantic => bench::scenario_transatlantic(),
            };
            let mut sc = match &g.scenario {
                Some(_) => g.load_scenario()?,
                None => p.scenario.clone(),
            };
            g.apply_overrides(&mut sc)?;
            let trace = match &g.trace {
                Some(path) => read_trace(path, Some(&sc))?,
                None => crate::trace::precompute(&sc, g.workers()?)?,
            };
            let opts = FidelityOptions {
                duration_s: sc.duration_seconds,
                mode: topology,
                seed: g.seed.unwrap_or(1),
                ..Default::default()
            };
            let rep = bench::fidelity_run(&sc, &trace, &p.plan, &opts)?;
            let dir = g.out_dir()?;
            write_file(&dir.join("measurements.csv"), |w| crate::backends::write_measurements_csv(&rep.records, w))?;
            write_file(&dir.join("handovers.csv"), |w| bench::write_handovers_csv(&rep.handovers, w))?;
            print_json(json!({ "records": rep.records.len(), "handovers": rep.handovers.len(), "out": dir }));
            Ok(())
        }
        Command::ExportViz { sample_every } => {
            let sc = g.load_scenario()?;
            let trace = read_trace(g.require(&g.trace, "--trace")?, Some(&sc))?;
            let doc = bench::export_viz(&trace, &sc, sample_every.unwrap_or(sc.step_seconds))?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("constellation.czml"));
            write_file(&out, |w| Ok(serde_json::to_writer(w, &doc)?))
        }
        Command::Validate => {
            let sc = g.load_scenario()?;
            let mut report = json!({ "scenario": "ok", "digest": sc.digest() });
            if let Some(path) = &g.trace {
                let t = read_trace(path, Some(&sc))?;
                report["trace"] = json!({ "steps": t.header.step_count });
            }
            print_json(report);
            Ok(())
        }
    }
}

fn write_step_reports(dir: &Path, reports: &[StepReport]) -> Result<()> {
    write_file(&dir.join("step_reports.jsonl"), |w| {
        for r in reports {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    })?;
    write_file(&dir.join("step_summary.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step_index", "lag_ms", "ops_applied"]).map_err(|e| Error::config(e.to_string()))?;
        for r in reports {
            out.serialize((r.step_index, r.lag_ms, r.ops_applied)).map_err(|e| Error::config(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::io(dir, e))
    })
}

fn run_bench(g: &GlobalArgs, cmd: BenchCommand) -> Result<()> {
    let dir = g.out_dir()?;
    let kind = g.backend.unwrap_or(BackendKind::Recording);
    match cmd {
        BenchCommand::Bringup { sizes, op_latency_ms } => {
            let lat = latency(op_latency_ms)?;
            let rows = bench::bench_bringup(&sizes, g.workers()?, || make_backend(kind, lat, TopologyMode::Grid))?;
            write_file(&dir.join("bringup.csv"), |w| bench::write_bringup_csv(&rows, w))?;
            print_json(serde_json::to_value(&rows)?);
        }
        BenchCommand::Updates { sizes, mode, op_latency_ms } => {
            let lat = latency(op_latency_ms)?;
            let opts = UpdateBenchOptions {
                duration_s: g.duration.unwrap_or(300.0),
                step_s: g.step.unwrap_or(5.0),
                pace: g.pace(Pace::Realtime(1.0))?,
                mode,
                workers: g.workers()?,
            };
            let runs = bench::bench_updates(&sizes, &opts, || make_backend(kind, lat, TopologyMode::Grid))?;
            write_file(&dir.join("update_steps.jsonl"), |w| bench::write_step_reports_jsonl(&runs, w))?;
            write_file(&dir.join("updates.csv"), |w| bench::write_updates_csv(&runs, w))?;
            let rows: Vec<_> = runs.iter().map(|r| r.summary()).collect();
            print_json(serde_json::to_value(&rows)?);
        }
        BenchCommand::Cpu { pids, interval } => {
            if !(interval > 0.0) {
                return Err(Error::config("--interval must be positive"));
            }
            let duration = Duration::from_secs_f64(g.duration.unwrap_or(10.0));
            let series = bench::sample_cpu(&pids, Duration::from_secs_f64(interval), duration)?;
            if let bench::CpuSeries::Sampled { samples, .. } = &series {
                write_file(&dir.join("cpu.csv"), |w| bench::write_cpu_csv(samples, w))?;
            }
            print_json(serde_json::to_value(&series)?);
        }
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("ORBIT_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp_millis().try_init();
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code }));
            code
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_config_file() {
        let flags = GlobalArgs { workers: Some(3), ..Default::default() };
        let file: GlobalArgs =
            serde_json::from_str(r#"{"workers": 8, "seed": 5, "backend": "recording", "realtime-factor": 2.0}"#)
                .unwrap();
        let g = flags.merged_with(file);
        assert_eq!(g.workers, Some(3));
        assert_eq!(g.seed, Some(5));
        assert_eq!(g.backend, Some(BackendKind::Recording));
        assert_eq!(g.realtime_factor, Some(2.0));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<GlobalArgs>(r#"{"wrokers": 8}"#).is_err());
    }

    #[test]
    fn parses_subcommands() {
        let cli =
            Cli::try_parse_from(["orbitemu", "bench", "bringup", "--sizes", "4,6", "--backend", "simulated"]).unwrap();
        assert_eq!(cli.global.backend, Some(BackendKind::Simulated));
        match cli.command {
            Command::Bench(BenchCommand::Bringup { sizes, .. }) => assert_eq!(sizes, vec![4, 6]),
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["orbitemu", "fidelity", "transatlantic", "--topology", "star"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Fidelity { preset: FidelityPreset::Transatlantic, topology: TopologyMode::Star }
        ));
        assert!(Cli::try_parse_from(["orbitemu", "bench", "nope"]).is_err());
    }

    #[test]
    fn zero_workers_is_config_error() {
        let g = GlobalArgs { workers: Some(0), ..Default::default() };
        assert!(matches!(g.workers(), Err(Error::Config(_))));
    }
}
