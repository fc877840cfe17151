//! Ready-made scenarios for the two measurement campaigns.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::orbits::ShellConfig;
use crate::topology::{GroundStationConfig, LinkDefaults, Scenario, DEFAULT_LINK_BUDGET, DEFAULT_NODE_BUDGET};

pub const OSNABRUECK: (f64, f64) = (52.28375864272186, 8.031676892719231);
pub const AERZEN: (f64, f64) = (52.06076175017756, 9.329243738284163);
pub const TRIUNFO_PASS: (f64, f64) = (34.0810947, -118.8991708);

pub const CAMPAIGN_EPOCH: &str = "2023-09-15T00:00:00Z";

/// What the fidelity harness measures and when. Each round starts with the
/// throughput sessions running side by side, followed by a ping train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub client: String,
    pub server: String,
    pub period_s: f64,
    pub throughput_duration_s: u32,
    /// `None` skips the throughput sessions.
    pub uplink_mbps: Option<f64>,
    pub downlink_mbps: Option<f64>,
    pub ping_count: u32,
    pub ping_interval_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub scenario: Scenario,
    pub plan: MeasurementPlan,
}

impl ScenarioPreset {
    pub fn json(&self) -> String {
        self.scenario.pretty_json()
    }
}

pub const PRESET_NAMES: [&str; 2] = ["wetlinks", "transatlantic"];

pub fn preset(name: &str) -> Option<ScenarioPreset> {
    match name {
        "wetlinks" => Some(scenario_wetlinks()),
        "transatlantic" => Some(scenario_transatlantic()),
        _ => None,
    }
}

fn station(name: &str, (lat, lon): (f64, f64)) -> GroundStationConfig {
    GroundStationConfig::new(name, lat, lon).expect("preset coordinates are valid")
}

fn campaign_scenario(shell: ShellConfig, stations: Vec<GroundStationConfig>) -> Scenario {
    Scenario {
        epoch: CAMPAIGN_EPOCH.into(),
        step_seconds: 5.0,
        duration_seconds: 3600.0,
        shells: vec![shell],
        ground_stations: stations,
        link_defaults: LinkDefaults::default(),
        bounding_box: None,
        gsl_contention: false,
        delay_quantum_us: crate::topology::DEFAULT_DELAY_QUANTUM_US,
        node_budget: DEFAULT_NODE_BUDGET,
        link_budget: DEFAULT_LINK_BUDGET,
    }
}

/// Ten of the 72 planes of a 53° Starlink-like shell above Osnabrück, with
/// the Aerzen gateway as the server side.
pub fn scenario_wetlinks() -> ScenarioPreset {
    let mut shell = ShellConfig::new(10, 22, 53.0);
    shell.raan_arc_rad = 10.0 / 72.0 * TAU;
    shell.raan_offset_deg = 225.0;
    ScenarioPreset {
        name: "wetlinks",
        scenario: campaign_scenario(shell, vec![station("osnabrueck", OSNABRUECK), station("aerzen", AERZEN)]),
        plan: MeasurementPlan {
            client: "osnabrueck".into(),
            server: "aerzen".into(),
            period_s: 180.0,
            throughput_duration_s: 10,
            uplink_mbps: Some(100.0),
            downlink_mbps: Some(500.0),
            ping_count: 250,
            ping_interval_s: 0.1,
        },
    }
}

/// The full 72×22 shell (1584 satellites fit the default node budget)
/// between Aerzen and Triunfo Pass.
pub fn scenario_transatlantic() -> ScenarioPreset {
    let shell = ShellConfig::new(72, 22, 53.0);
    ScenarioPreset {
        name: "transatlantic",
        scenario: campaign_scenario(shell, vec![station("aerzen", AERZEN), station("triunfo-pass", TRIUNFO_PASS)]),
        plan: MeasurementPlan {
            client: "aerzen".into(),
            server: "triunfo-pass".into(),
            period_s: 180.0,
            throughput_duration_s: 0,
            uplink_mbps: None,
            downlink_mbps: None,
            ping_count: 250,
            ping_interval_s: 0.1,
        },
    }
}

/// Full-arc `planes`×22 shell with the two German stations; the size
/// series used by the bring-up and update benchmarks.
pub fn scaling_scenario(planes: u32) -> Scenario {
    campaign_scenario(
        ShellConfig::new(planes, 22, 53.0),
        vec![station("osnabrueck", OSNABRUECK), station("aerzen", AERZEN)],
    )
}
