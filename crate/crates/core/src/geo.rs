//! Time, coordinate and link-geometry math.
//!
//! The Earth is modelled as a sphere of radius [`EARTH_RADIUS_M`]. Satellites
//! and ground stations share the same frame, so the simplification only
//! affects absolute accuracy, never self-consistency.

use std::f64::consts::TAU;
use std::fmt;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

/// Earth model selector. Only the sphere is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarthModel {
    #[default]
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeodetic", into = "RawGeodetic")]
pub struct GeodeticCoord {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGeodetic {
    lat_deg: f64,
    lon_deg: f64,
    #[serde(default)]
    alt_m: f64,
}

impl TryFrom<RawGeodetic> for GeodeticCoord {
    type Error = Error;
    fn try_from(r: RawGeodetic) -> Result<Self> {
        GeodeticCoord::new(r.lat_deg, r.lon_deg, r.alt_m)
    }
}

impl From<GeodeticCoord> for RawGeodetic {
    fn from(g: GeodeticCoord) -> Self {
        RawGeodetic { lat_deg: g.lat_deg, lon_deg: g.lon_deg, alt_m: g.alt_m }
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon_deg(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can land exactly on 360 through rounding
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

impl GeodeticCoord {
    /// Builds a coordinate, wrapping the longitude into `[-180, 180)`.
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::config(format!("latitude {lat_deg} outside [-90, 90]")));
        }
        if !lon_deg.is_finite() {
            return Err(Error::config(format!("longitude {lon_deg} is not finite")));
        }
        if !alt_m.is_finite() || alt_m < -500.0 {
            return Err(Error::config(format!("altitude {alt_m} m below -500 m")));
        }
        Ok(GeodeticCoord { lat_deg, lon_deg: normalize_lon_deg(lon_deg), alt_m })
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_deg
    }

    pub fn alt_m(&self) -> f64 {
        self.alt_m
    }
}

/// Earth-centered Earth-fixed position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EcefPos {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl EcefPos {
    pub const fn new(x_m: f64, y_m: f64, z_m: f64) -> Self {
        EcefPos { x_m, y_m, z_m }
    }

    pub fn norm(&self) -> f64 {
        (self.x_m * self.x_m + self.y_m * self.y_m + self.z_m * self.z_m).sqrt()
    }

    pub fn dot(&self, o: &EcefPos) -> f64 {
        self.x_m * o.x_m + self.y_m * o.y_m + self.z_m * o.z_m
    }

    pub fn sub(&self, o: &EcefPos) -> EcefPos {
        EcefPos::new(self.x_m - o.x_m, self.y_m - o.y_m, self.z_m - o.z_m)
    }

    pub fn scale(&self, k: f64) -> EcefPos {
        EcefPos::new(self.x_m * k, self.y_m * k, self.z_m * k)
    }
}

/// An instant in simulated time: a UTC epoch plus a whole-millisecond offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimInstant {
    epoch: DateTime<Utc>,
    offset_ms: u64,
}

impl SimInstant {
    pub fn at_epoch(epoch: DateTime<Utc>) -> Self {
        SimInstant { epoch, offset_ms: 0 }
    }

    pub fn new(epoch: DateTime<Utc>, offset_ms: u64) -> Self {
        SimInstant { epoch, offset_ms }
    }

    /// Parses an ISO-8601 / RFC 3339 UTC timestamp as the epoch.
    pub fn parse_epoch(s: &str) -> Result<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(s)
            .map(|d| d.with_timezone(&Utc))
            .map_err(|e| Error::config(format!("bad epoch {s:?}: {e}")))
    }

    pub fn epoch(&self) -> DateTime<Utc> {
        self.epoch
    }

    pub fn offset_ms(&self) -> u64 {
        self.offset_ms
    }

    pub fn offset_s(&self) -> f64 {
        self.offset_ms as f64 / 1000.0
    }

    pub fn plus_ms(&self, ms: u64) -> SimInstant {
        SimInstant { epoch: self.epoch, offset_ms: self.offset_ms + ms }
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.epoch + Duration::milliseconds(self.offset_ms as i64)
    }
}

impl fmt::Display for SimInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.utc().to_rfc3339_opts(SecondsFormat::Millis, true))
    }
}

pub fn geodetic_to_ecef(g: &GeodeticCoord) -> EcefPos {
    let r = EARTH_RADIUS_M + g.alt_m;
    let (lat, lon) = (g.lat_deg.to_radians(), g.lon_deg.to_radians());
    EcefPos::new(r * lat.cos() * lon.cos(), r * lat.cos() * lon.sin(), r * lat.sin())
}

/// Inverse of [`geodetic_to_ecef`]. The origin maps to the south pole at -R.
pub fn ecef_to_geodetic(p: &EcefPos) -> GeodeticCoord {
    let r = p.norm();
    let horiz = p.x_m.hypot(p.y_m);
    let lat = p.z_m.atan2(horiz).to_degrees();
    let lon = normalize_lon_deg(p.y_m.atan2(p.x_m).to_degrees());
    GeodeticCoord { lat_deg: lat, lon_deg: lon, alt_m: r - EARTH_RADIUS_M }
}

pub fn distance_m(a: &EcefPos, b: &EcefPos) -> f64 {
    a.sub(b).norm()
}

/// Elevation of `sat` above the local horizon of `gs`, in degrees.
pub fn elevation_deg(gs: &EcefPos, sat: &EcefPos) -> f64 {
    let los = sat.sub(gs);
    let range = los.norm();
    if range == 0.0 {
        return 90.0;
    }
    let up = gs.scale(1.0 / gs.norm());
    let sin_el = (up.dot(&los) / range).clamp(-1.0, 1.0);
    sin_el.asin().to_degrees()
}

/// One-way free-space delay in whole microseconds, rounding half up.
pub fn propagation_delay_us(d_m: f64) -> u64 {
    debug_assert!(d_m >= 0.0);
    (d_m / SPEED_OF_LIGHT_M_S * 1e6 + 0.5).floor() as u64
}

/// Slant range to a satellite at `alt_m` seen at elevation `elev_deg`.
pub fn slant_range_m(alt_m: f64, elev_deg: f64) -> f64 {
    let r = EARTH_RADIUS_M;
    let e = elev_deg.to_radians();
    r * ((((r + alt_m) / r).powi(2) - e.cos().powi(2)).sqrt() - e.sin())
}

const J2000_UNIX_S: f64 = 946_728_000.0; // 2000-01-01T12:00:00Z

/// First-order sidereal angle of a UTC instant (UT1 taken equal to UTC).
pub fn sidereal_angle_rad(t: DateTime<Utc>) -> f64 {
    let unix = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
    let days = (unix - J2000_UNIX_S) / 86_400.0;
    let turns = 0.779_057_273_264 + 1.002_737_811_911_354_5 * days;
    (turns.rem_euclid(1.0)) * TAU
}

/// Rotation of the Earth-fixed frame relative to the inertial frame at `t`.
pub fn earth_rotation_angle_rad(t: &SimInstant) -> f64 {
    (sidereal_angle_rad(t.epoch) + EARTH_ROTATION_RAD_S * t.offset_s()).rem_euclid(TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn epoch() -> DateTime<Utc> {
        SimInstant::parse_epoch("2023-09-15T00:00:00Z").unwrap()
    }

    #[test]
    fn equator_prime_meridian() {
        let p = geodetic_to_ecef(&GeodeticCoord::new(0.0, 0.0, 0.0).unwrap());
        assert_relative_eq!(p.x_m, 6_371_000.0);
        assert!(p.y_m.abs() < 1e-9 && p.z_m.abs() < 1e-9);
    }

    #[test]
    fn pole_case() {
        let p = geodetic_to_ecef(&GeodeticCoord::new(90.0, 0.0, 550_000.0).unwrap());
        assert!(p.x_m.abs() < 1e-6 && p.y_m.abs() < 1e-9);
        assert_relative_eq!(p.z_m, 6_921_000.0);
    }

    #[test]
    fn osnabrueck_site() {
        // 40-digit evaluation of the spherical formula
        let g = GeodeticCoord::new(52.28375864272186, 8.031676892719231, 0.0).unwrap();
        let p = geodetic_to_ecef(&g);
        assert_relative_eq!(p.x_m, 3_859_237.168_765_583, max_relative = 1e-12);
        assert_relative_eq!(p.y_m, 544_556.366_710_614_6, max_relative = 1e-12);
        assert_relative_eq!(p.z_m, 5_039_780.534_774_619, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_coords() {
        assert!(GeodeticCoord::new(91.0, 0.0, 0.0).is_err());
        assert!(GeodeticCoord::new(0.0, f64::NAN, 0.0).is_err());
        assert!(GeodeticCoord::new(0.0, 0.0, -600.0).is_err());
        assert_eq!(GeodeticCoord::new(0.0, 180.0, 0.0).unwrap().lon_deg(), -180.0);
        assert_eq!(GeodeticCoord::new(0.0, 540.0, 0.0).unwrap().lon_deg(), -180.0);
    }

    #[test]
    fn distance_examples() {
        let a = EcefPos::new(6_371_000.0, 0.0, 0.0);
        let b = EcefPos::new(0.0, 0.0, 6_921_000.0);
        assert_eq!(distance_m(&a, &a), 0.0);
        assert_relative_eq!(distance_m(&a, &b), 9_406_906.080_109_443, max_relative = 1e-12);
        assert!((distance_m(&a, &b) - 9.407e6).abs() < 1e3);
    }

    #[test]
    fn elevation_zenith_and_below() {
        let gs = geodetic_to_ecef(&GeodeticCoord::new(30.0, 40.0, 0.0).unwrap());
        assert_relative_eq!(elevation_deg(&gs, &gs.scale(1.1)), 90.0, epsilon = 1e-9);
        assert!(elevation_deg(&gs, &gs.scale(-1.1)) < 0.0);
    }

    #[test]
    fn slant_range_at_25_deg() {
        // closed form evaluated at high precision: 1_123_277.001_6 m
        let d = slant_range_m(550_000.0, 25.0);
        assert!((d - 1_123_277.001_6).abs() < 1e-3);
        // place a satellite at that slant range/elevation and measure back
        let gs = EcefPos::new(EARTH_RADIUS_M, 0.0, 0.0);
        let e = 25f64.to_radians();
        let sat = EcefPos::new(EARTH_RADIUS_M + d * e.sin(), d * e.cos(), 0.0);
        assert_relative_eq!(sat.norm(), EARTH_RADIUS_M + 550_000.0, max_relative = 1e-12);
        assert_relative_eq!(elevation_deg(&gs, &sat), 25.0, epsilon = 1e-9);
        assert_relative_eq!(distance_m(&gs, &sat), d, max_relative = 1e-12);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(propagation_delay_us(0.0), 0);
        assert_eq!(propagation_delay_us(550_000.0), 1835);
        assert_eq!(propagation_delay_us(9_200_000.0), 30_688);
        // exact half rounds up
        assert_eq!(propagation_delay_us(SPEED_OF_LIGHT_M_S * 2.5e-6), 3);
    }

    #[test]
    fn rotation_angle_examples() {
        let t0 = SimInstant::at_epoch(epoch());
        let th0 = earth_rotation_angle_rad(&t0);
        assert_relative_eq!(th0, sidereal_angle_rad(epoch()));
        let day_ms = (TAU / EARTH_ROTATION_RAD_S * 1000.0).round() as u64;
        let th_day = earth_rotation_angle_rad(&t0.plus_ms(day_ms));
        let d = (th_day - th0).rem_euclid(TAU);
        assert!(d < 1e-6 || TAU - d < 1e-6);
        let th_h = earth_rotation_angle_rad(&t0.plus_ms(3_600_000));
        assert_relative_eq!((th_h - th0).rem_euclid(TAU), 0.262_516_172_4, epsilon = 1e-9);
    }

    #[test]
    fn sim_instant_arithmetic() {
        let t = SimInstant::at_epoch(epoch()).plus_ms(1_500).plus_ms(2_250);
        assert_eq!(t.offset_ms(), 3_750);
        assert_eq!(t.offset_s(), 3.75);
        assert_eq!(t.to_string(), "2023-09-15T00:00:03.750Z");
        assert!(t > SimInstant::at_epoch(epoch()));
    }

    proptest! {
        #[test]
        fn geodetic_round_trip(lat in -89.9f64..89.9, lon in -180.0f64..180.0, alt in -500.0f64..2.0e6) {
            let g = GeodeticCoord::new(lat, lon, alt).unwrap();
            let p = geodetic_to_ecef(&g);
            prop_assert!((p.norm() - (EARTH_RADIUS_M + alt)).abs() / (EARTH_RADIUS_M + alt) < 1e-6);
            let back = ecef_to_geodetic(&p);
            prop_assert!((back.lat_deg() - lat).to_radians().abs() < 1e-9);
            let dlon = normalize_lon_deg(back.lon_deg() - lon);
            prop_assert!(dlon.to_radians().abs() < 1e-9);
            prop_assert!((back.alt_m() - alt).abs() < 1e-3);
        }

        #[test]
        fn lon_normalization_idempotent(lon in -1e4f64..1e4) {
            let n = normalize_lon_deg(lon);
            prop_assert!((-180.0..180.0).contains(&n));
            prop_assert_eq!(normalize_lon_deg(n), n);
        }

        #[test]
        fn triangle_inequality(v in proptest::array::uniform9(-1e7f64..1e7)) {
            let a = EcefPos::new(v[0], v[1], v[2]);
            let b = EcefPos::new(v[3], v[4], v[5]);
            let c = EcefPos::new(v[6], v[7], v[8]);
            prop_assert_eq!(distance_m(&a, &b), distance_m(&b, &a));
            prop_assert!(distance_m(&a, &c) <= distance_m(&a, &b) + distance_m(&b, &c) + 1e-6);
        }

        #[test]
        fn delay_monotone(a in 0.0f64..1e8, b in 0.0f64..1e8) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(propagation_delay_us(lo) <= propagation_delay_us(hi));
        }
    }
}
