use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize, Serializer};

use super::eruption::EruptionReport;
use super::flare::{FlareReport, Importance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Flare,
    FilamentEruption,
}

fn ts<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match t {
        Some(t) => s.serialize_str(&crate::rfc3339(*t)),
        None => s.serialize_none(),
    }
}

/// One NDJSON output line. For eruptions `start` is the last sighting and
/// `end` the moment the absence window elapsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ts")]
    pub start: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ts")]
    pub peak: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ts")]
    pub end: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Importance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_msh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_intensity: Option<f64>,
}

impl From<&FlareReport> for EventRecord {
    fn from(r: &FlareReport) -> Self {
        EventRecord {
            kind: EventKind::Flare,
            id: r.id,
            start: Some(r.start),
            peak: Some(r.peak),
            end: Some(r.end),
            importance: Some(r.importance),
            lat_deg: Some(r.lat_deg),
            lon_deg: Some(r.lon_deg),
            area_msh: Some(r.area_msh),
            length_px: None,
            rel_intensity: Some(r.rel_intensity),
        }
    }
}

impl From<&EruptionReport> for EventRecord {
    fn from(r: &EruptionReport) -> Self {
        EventRecord {
            kind: EventKind::FilamentEruption,
            id: r.id,
            start: Some(r.last_seen),
            peak: None,
            end: Some(r.disappearance),
            importance: None,
            lat_deg: Some(r.lat_deg),
            lon_deg: Some(r.lon_deg),
            area_msh: None,
            length_px: Some(r.length_px),
            rel_intensity: None,
        }
    }
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.to_line())
    }

    pub fn as_flare(&self) -> Option<FlareReport> {
        if self.kind != EventKind::Flare {
            return None;
        }
        Some(FlareReport {
            id: self.id,
            start: self.start?,
            peak: self.peak.or(self.start)?,
            end: self.end?,
            importance: self.importance?,
            lat_deg: self.lat_deg?,
            lon_deg: self.lon_deg?,
            area_msh: self.area_msh.unwrap_or(0.0),
            rel_intensity: self.rel_intensity.unwrap_or(0.0),
        })
    }

    pub fn as_eruption(&self) -> Option<EruptionReport> {
        if self.kind != EventKind::FilamentEruption {
            return None;
        }
        Some(EruptionReport {
            id: self.id,
            last_seen: self.start.or(self.end)?,
            disappearance: self.end?,
            lat_deg: self.lat_deg?,
            lon_deg: self.lon_deg?,
            length_px: self.length_px.unwrap_or(0.0),
        })
    }
}

/// Parses an NDJSON stream, skipping blank lines.
pub fn read_records(input: impl BufRead) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
