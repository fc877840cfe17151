//! CZML export of a run for standard globe viewers. Pure file output.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::{ecef_to_geodetic, geodetic_to_ecef};
use crate::topology::{Constellation, LinkKey, NodeId, Scenario};
use crate::trace::TraceFile;

fn iso(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn interval(a: DateTime<Utc>, b: DateTime<Utc>) -> String {
    format!("{}/{}", iso(a), iso(b))
}

/// Builds the CZML packet array: a document packet, one entity per node
/// with time-tagged geodetic positions every `sample_every_s`, and one
/// polyline per contiguous lifetime of each link.
pub fn export_viz(trace: &TraceFile, scenario: &Scenario, sample_every_s: f64) -> Result<Value> {
    trace.check_scenario(scenario)?;
    let step_ms = scenario.step_ms();
    let every_ms = (sample_every_s * 1000.0).round() as u64;
    if every_ms == 0 || (sample_every_s * 1000.0 - every_ms as f64).abs() > 1e-6 {
        return Err(Error::config("sample interval must be a positive whole number of milliseconds"));
    }
    let c = Constellation::new(scenario)?;
    let t0 = scenario.instant(0);
    let end_ms = trace.header.step_count * step_ms;
    let start = t0.utc();
    let end = t0.plus_ms(end_ms).utc();

    let mut packets = vec![json!({
        "id": "document",
        "name": "constellation",
        "version": "1.0",
        "clock": {
            "interval": interval(start, end),
            "currentTime": iso(start),
            "multiplier": 60,
            "range": "LOOP_STOP",
            "step": "SYSTEM_CLOCK_MULTIPLIER",
        },
    })];

    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); c.satellites().len()];
    let mut t_ms = 0;
    loop {
        let t = t0.plus_ms(t_ms);
        for (i, p) in c.positions_at(&t).iter().enumerate() {
            let g = ecef_to_geodetic(p);
            coords[i].extend([t_ms as f64 / 1000.0, g.lon_deg(), g.lat_deg(), g.alt_m()]);
        }
        if t_ms >= end_ms {
            break;
        }
        t_ms = (t_ms + every_ms).min(end_ms);
    }
    for ((id, _), cd) in c.satellites().iter().zip(coords) {
        packets.push(json!({
            "id": id.to_string(),
            "name": id.to_string(),
            "availability": interval(start, end),
            "position": {
                "epoch": iso(start),
                "interpolationAlgorithm": "LAGRANGE",
                "interpolationDegree": 5,
                "referenceFrame": "FIXED",
                "cartographicDegrees": cd,
            },
            "point": { "pixelSize": 4, "color": { "rgba": [255, 255, 255, 255] } },
        }));
    }
    for (i, gs) in scenario.ground_stations.iter().enumerate() {
        let g = ecef_to_geodetic(&geodetic_to_ecef(&gs.location));
        packets.push(json!({
            "id": NodeId::Ground(i as u16).to_string(),
            "name": gs.name,
            "position": { "cartographicDegrees": [g.lon_deg(), g.lat_deg(), g.alt_m()] },
            "point": { "pixelSize": 8, "color": { "rgba": [255, 64, 64, 255] } },
        }));
    }

    // link lifetimes from the diff stream
    let mut open: BTreeMap<LinkKey, u64> = BTreeMap::new();
    let mut spans: Vec<(LinkKey, u64, u64)> = Vec::new();
    for d in &trace.diffs {
        let at = d.step_index * step_ms;
        for k in &d.links_removed {
            if let Some(s) = open.remove(k) {
                spans.push((*k, s, at));
            }
        }
        for (k, _) in &d.links_added {
            open.insert(*k, at);
        }
    }
    spans.extend(open.into_iter().map(|(k, s)| (k, s, end_ms)));
    spans.sort_by_key(|(k, s, _)| (*k, *s));
    for (k, s, e) in spans {
        let rgba = if k.is_gsl() { [64, 255, 64, 255] } else { [64, 160, 255, 160] };
        packets.push(json!({
            "id": format!("link:{k}@{s}"),
            "availability": interval(t0.plus_ms(s).utc(), t0.plus_ms(e).utc()),
            "polyline": {
                "positions": { "references": [format!("{}#position", k.a()), format!("{}#position", k.b())] },
                "width": 1,
                "arcType": "NONE",
                "material": { "solidColor": { "color": { "rgba": rgba } } },
            },
        }));
    }
    Ok(Value::Array(packets))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::orbits::ShellConfig;
    use crate::topology::GroundStationConfig;
    use crate::trace::precompute;

    fn parse_time(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).expect("ISO 8601 time").with_timezone(&Utc)
    }

    /// Checks the subset of the CZML packet schema that the exporter emits.
    fn validate_czml(doc: &Value) -> std::result::Result<(), String> {
        let packets = doc.as_array().ok_or("document must be an array")?;
        let first = packets.first().ok_or("empty document")?;
        if first["id"] != "document" || first["version"] != "1.0" {
            return Err("first packet must be the document packet with version 1.0".into());
        }
        let mut ids = BTreeSet::new();
        let mut positioned = BTreeSet::new();
        for p in packets {
            let id = p["id"].as_str().ok_or("packet without string id")?;
            if !ids.insert(id.to_owned()) {
                return Err(format!("duplicate id {id}"));
            }
            if let Some(a) = p.get("availability") {
                let (s, e) = a.as_str().and_then(|a| a.split_once('/')).ok_or("availability must be an interval")?;
                if parse_time(s) > parse_time(e) {
                    return Err(format!("{id}: reversed interval"));
                }
            }
            if let Some(pos) = p.get("position") {
                positioned.insert(id.to_owned());
                let cd = pos["cartographicDegrees"].as_array().ok_or("cartographicDegrees missing")?;
                let cd: Vec<f64> = cd
                    .iter()
                    .map(|v| v.as_f64().ok_or("non-numeric coordinate"))
                    .collect::<std::result::Result<_, _>>()?;
                let stride = if pos.get("epoch").is_some() {
                    parse_time(pos["epoch"].as_str().ok_or("epoch must be a string")?);
                    4
                } else {
                    3
                };
                if !cd.len().is_multiple_of(stride) || cd.is_empty() {
                    return Err(format!("{id}: coordinate length {} not a multiple of {stride}", cd.len()));
                }
                let mut last_t = f64::NEG_INFINITY;
                for tuple in cd.chunks(stride) {
                    let (t, rest) = if stride == 4 { (tuple[0], &tuple[1..]) } else { (0.0, tuple) };
                    if stride == 4 && t <= last_t {
                        return Err(format!("{id}: sample times not increasing"));
                    }
                    last_t = t;
                    if !(-180.0..=180.0).contains(&rest[0]) || !(-90.0..=90.0).contains(&rest[1]) {
                        return Err(format!("{id}: coordinate out of range"));
                    }
                }
            }
            if let Some(line) = p.get("polyline") {
                for r in line["positions"]["references"].as_array().ok_or("polyline references missing")? {
                    let r = r.as_str().ok_or("reference must be a string")?;
                    let (target, prop) = r.split_once('#').ok_or("reference needs #property")?;
                    if prop != "position" || !positioned.contains(target) {
                        return Err(format!("{id}: dangling reference {r}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn tiny(duration: f64) -> Scenario {
        let mut sc = crate::bench::presets::scenario_wetlinks().scenario;
        sc.duration_seconds = duration;
        sc
    }

    #[test]
    fn one_satellite_two_samples() {
        let mut sc = tiny(10.0);
        sc.shells = vec![ShellConfig::new(1, 1, 53.0)];
        sc.ground_stations.clear();
        let trace = precompute(&sc, 1).unwrap();
        let doc = export_viz(&trace, &sc, 10.0).unwrap();
        let packets = doc.as_array().unwrap();
        assert_eq!(packets.len(), 2);
        assert_eq!(packets[1]["position"]["cartographicDegrees"].as_array().unwrap().len(), 8);
        validate_czml(&doc).unwrap();
    }

    #[test]
    fn sampling_at_step_gives_step_count_plus_one() {
        let sc = tiny(120.0);
        let trace = precompute(&sc, 1).unwrap();
        let doc = export_viz(&trace, &sc, sc.step_seconds).unwrap();
        validate_czml(&doc).unwrap();
        let sat = &doc[1]["position"]["cartographicDegrees"];
        assert_eq!(sat.as_array().unwrap().len() as u64, 4 * (sc.step_count() + 1));
        let links = doc.as_array().unwrap().iter().filter(|p| p.get("polyline").is_some()).count();
        assert!(links >= trace.diffs[0].links_added.len());
    }

    #[test]
    fn validator_rejects_bad_documents() {
        assert!(validate_czml(&json!([{"id": "x"}])).is_err());
        let dangling = json!([
            {"id": "document", "version": "1.0"},
            {"id": "l", "polyline": {"positions": {"references": ["gs:0#position"]}}}
        ]);
        assert!(validate_czml(&dangling).is_err());
        let bad_lat = json!([
            {"id": "document", "version": "1.0"},
            {"id": "gs:0", "position": {"cartographicDegrees": [0.0, 95.0, 0.0]}}
        ]);
        assert!(validate_czml(&bad_lat).is_err());
    }

    #[test]
    fn mismatched_scenario_rejected() {
        let sc = tiny(10.0);
        let trace = precompute(&sc, 1).unwrap();
        let mut other = sc.clone();
        other.ground_stations.push(GroundStationConfig::new("x", 0.0, 0.0).unwrap());
        assert!(matches!(export_viz(&trace, &other, 5.0), Err(Error::DigestMismatch { .. })));
        assert!(export_viz(&trace, &sc, 0.0).is_err());
    }
}
