//! Experiment harness: scaling benchmarks, CPU sampling, the fidelity
//! campaigns and visualisation export.

pub mod cpu;
pub mod fidelity;
pub mod harness;
pub mod presets;
pub mod viz;

pub use cpu::{sample_cpu, write_cpu_csv, CpuSample, CpuSeries};
pub use fidelity::{
    fidelity_run, trace_handovers, write_handovers_csv, FidelityOptions, FidelityReport, HandoverEvent, TraceDriver,
};
pub use harness::{
    bench_bringup, bench_updates, write_bringup_csv, write_step_reports_jsonl, write_updates_csv, BringUpRow,
    UpdateBenchOptions, UpdateMode, UpdateRow, UpdateRun, DEFAULT_SIZES,
};
pub use presets::{preset, scenario_transatlantic, scenario_wetlinks, MeasurementPlan, ScenarioPreset};
pub use viz::export_viz;
