//! Walker-style shell generation, circular two-body propagation and TLE export.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{earth_rotation_angle_rad, EcefPos, SimInstant, EARTH_RADIUS_M};

/// Standard gravitational parameter of the Earth, m³/s².
pub const MU_EARTH: f64 = 3.986_004_418e14;

pub const DEFAULT_ALTITUDE_KM: f64 = 550.0;

fn default_altitude_km() -> f64 {
    DEFAULT_ALTITUDE_KM
}

fn default_raan_arc() -> f64 {
    TAU
}

/// One constellation shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellConfig {
    pub planes: u32,
    pub sats_per_plane: u32,
    pub inclination_deg: f64,
    #[serde(default = "default_altitude_km")]
    pub altitude_km: f64,
    /// Angular span over which the plane RAANs are spread.
    #[serde(default = "default_raan_arc")]
    pub raan_arc_rad: f64,
    #[serde(default)]
    pub raan_offset_deg: f64,
    /// Walker phasing factor F in `[0, 1)`.
    #[serde(default)]
    pub phase_offset: f64,
}

impl ShellConfig {
    pub fn new(planes: u32, sats_per_plane: u32, inclination_deg: f64) -> Self {
        ShellConfig {
            planes,
            sats_per_plane,
            inclination_deg,
            altitude_km: DEFAULT_ALTITUDE_KM,
            raan_arc_rad: TAU,
            raan_offset_deg: 0.0,
            phase_offset: 0.0,
        }
    }

    pub fn satellite_count(&self) -> usize {
        self.planes as usize * self.sats_per_plane as usize
    }

    /// True when the planes span the whole equator, so the last plane is
    /// adjacent to the first.
    pub fn is_full_arc(&self) -> bool {
        (self.raan_arc_rad - TAU).abs() < 1e-9
    }

    pub fn validate(&self, node_budget: usize) -> Result<()> {
        if self.planes == 0 || self.sats_per_plane == 0 {
            return Err(Error::config("shell must have at least one plane and one satellite"));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(Error::config(format!("inclination {} outside [0, 180]", self.inclination_deg)));
        }
        if !(self.altitude_km > 100.0) {
            return Err(Error::config(format!("altitude {} km must exceed 100 km", self.altitude_km)));
        }
        if !(self.raan_arc_rad > 0.0 && self.raan_arc_rad <= TAU + 1e-12) {
            return Err(Error::config(format!("raan_arc_rad {} outside (0, 2pi]", self.raan_arc_rad)));
        }
        if !(0.0..360.0).contains(&self.raan_offset_deg) {
            return Err(Error::config(format!("raan_offset_deg {} outside [0, 360)", self.raan_offset_deg)));
        }
        if !(0.0..1.0).contains(&self.phase_offset) {
            return Err(Error::config(format!("phase_offset {} outside [0, 1)", self.phase_offset)));
        }
        if self.satellite_count() > node_budget {
            return Err(Error::budget(format!(
                "shell has {} satellites, node budget is {node_budget}",
                self.satellite_count()
            )));
        }
        Ok(())
    }
}

/// Identity of one satellite within a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatelliteId {
    pub shell: u16,
    pub plane: u16,
    pub slot: u16,
}

impl SatelliteId {
    pub const fn new(shell: u16, plane: u16, slot: u16) -> Self {
        SatelliteId { shell, plane, slot }
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sat:{}:{}:{}", self.shell, self.plane, self.slot)
    }
}

impl FromStr for SatelliteId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad satellite id {s:?}"));
        let rest = s.strip_prefix("sat:").ok_or_else(bad)?;
        let mut it = rest.split(':').map(|p| p.parse::<u16>().map_err(|_| bad()));
        let id =
            SatelliteId::new(it.next().ok_or_else(bad)??, it.next().ok_or_else(bad)??, it.next().ok_or_else(bad)??);
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(id)
    }
}

impl Serialize for SatelliteId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SatelliteId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Circular-orbit elements at the scenario epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements {
    pub semi_major_axis_m: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    /// Argument of latitude at epoch.
    pub initial_anomaly_rad: f64,
    pub mean_motion_rad_s: f64,
}

impl OrbitalElements {
    pub fn circular(semi_major_axis_m: f64, inclination_rad: f64, raan_rad: f64, anomaly_rad: f64) -> Self {
        OrbitalElements {
            semi_major_axis_m,
            inclination_rad,
            raan_rad,
            initial_anomaly_rad: anomaly_rad,
            mean_motion_rad_s: (MU_EARTH / semi_major_axis_m.powi(3)).sqrt(),
        }
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion_rad_s
    }

    /// Position in the inertial frame after `dt_s` seconds.
    pub fn inertial_position(&self, dt_s: f64) -> EcefPos {
        let u = self.initial_anomaly_rad + self.mean_motion_rad_s * dt_s;
        let (su, cu) = u.sin_cos();
        let (si, ci) = self.inclination_rad.sin_cos();
        let (so, co) = self.raan_rad.sin_cos();
        let a = self.semi_major_axis_m;
        EcefPos::new(a * (co * cu - so * ci * su), a * (so * cu + co * ci * su), a * si * su)
    }
}

/// Generates every satellite of a shell, ordered by `(plane, slot)`.
pub fn generate_shell(shell_index: u16, cfg: &ShellConfig) -> Vec<(SatelliteId, OrbitalElements)> {
    let a = EARTH_RADIUS_M + cfg.altitude_km * 1000.0;
    let inc = cfg.inclination_deg.to_radians();
    let plane_step = cfg.raan_arc_rad / f64::from(cfg.planes);
    let slot_step = TAU / f64::from(cfg.sats_per_plane);
    let offset = cfg.raan_offset_deg.to_radians();
    let mut out = Vec::with_capacity(cfg.satellite_count());
    for p in 0..cfg.planes {
        let raan = (offset + f64::from(p) * plane_step).rem_euclid(TAU);
        for s in 0..cfg.sats_per_plane {
            let anomaly = (f64::from(s) * slot_step + f64::from(p) * cfg.phase_offset * slot_step).rem_euclid(TAU);
            out.push((
                SatelliteId::new(shell_index, p as u16, s as u16),
                OrbitalElements::circular(a, inc, raan, anomaly),
            ));
        }
    }
    out
}

/// Earth-fixed position of a satellite at `t`.
pub fn propagate(el: &OrbitalElements, t: &SimInstant) -> EcefPos {
    let p = el.inertial_position(t.offset_s());
    let (s, c) = earth_rotation_angle_rad(t).sin_cos();
    // rotate by -theta about z
    EcefPos::new(c * p.x_m + s * p.y_m, -s * p.x_m + c * p.y_m, p.z_m)
}

fn tle_checksum(line: &str) -> u32 {
    line.bytes()
        .map(|b| match b {
            b'0'..=b'9' => u32::from(b - b'0'),
            b'-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

/// Catalog number used in exported TLEs: `shell·10000 + plane·100 + slot`, mod 100000.
pub fn catalog_number(id: &SatelliteId) -> u32 {
    (u32::from(id.shell) * 10_000 + u32::from(id.plane) * 100 + u32::from(id.slot)) % 100_000
}

/// Renders circular elements as a two-line element set referenced to `epoch`.
pub fn export_tle(id: &SatelliteId, el: &OrbitalElements, epoch: DateTime<Utc>) -> [String; 2] {
    let num = catalog_number(id);
    let day = f64::from(epoch.ordinal())
        + (f64::from(epoch.num_seconds_from_midnight()) + f64::from(epoch.nanosecond()) * 1e-9) / 86_400.0;
    let l1 = format!(
        "1 {num:05}U          {:02}{day:012.8}  .00000000  00000-0  00000-0 0    1",
        epoch.year().rem_euclid(100)
    );
    let rev_per_day = el.mean_motion_rad_s * 86_400.0 / TAU;
    let l2 = format!(
        "2 {num:05} {:8.4} {:8.4} 0000000 {:8.4} {:8.4} {rev_per_day:11.8}    0",
        el.inclination_rad.to_degrees(),
        el.raan_rad.to_degrees().rem_euclid(360.0),
        0.0,
        el.initial_anomaly_rad.to_degrees().rem_euclid(360.0),
    );
    [format!("{l1}{}", tle_checksum(&l1)), format!("{l2}{}", tle_checksum(&l2))]
}

/// Parsed subset of a TLE needed to rebuild circular elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TleFields {
    pub catalog_number: u32,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub eccentricity: f64,
    pub mean_anomaly_deg: f64,
    pub mean_motion_rev_day: f64,
}

impl TleFields {
    pub fn to_elements(&self) -> OrbitalElements {
        let n = self.mean_motion_rev_day * TAU / 86_400.0;
        let a = (MU_EARTH / (n * n)).cbrt();
        OrbitalElements::circular(
            a,
            self.inclination_deg.to_radians(),
            self.raan_deg.to_radians(),
            self.mean_anomaly_deg.to_radians(),
        )
    }
}

/// Parses and checksum-verifies a TLE pair.
pub fn parse_tle(l1: &str, l2: &str) -> Result<TleFields> {
    for (n, l) in [(1u32, l1), (2, l2)] {
        if l.len() != 69 || !l.is_ascii() {
            return Err(Error::config(format!("TLE line {n} must be 69 ASCII characters")));
        }
        let want = tle_checksum(&l[..68]);
        if l[68..].parse::<u32>().ok() != Some(want) {
            return Err(Error::config(format!("TLE line {n} checksum mismatch")));
        }
    }
    let field =
        |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|_| Error::config(format!("bad TLE field {s:?}"))) };
    Ok(TleFields {
        catalog_number: field(&l2[2..7])? as u32,
        inclination_deg: field(&l2[8..16])?,
        raan_deg: field(&l2[17..25])?,
        eccentricity: field(&format!("0.{}", &l2[26..33]))?,
        mean_anomaly_deg: field(&l2[43..51])?,
        mean_motion_rev_day: field(&l2[52..63])?,
    })
}
