use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::track::EventTrack;
use crate::error::{Error, Result};
use crate::imgio::{pixel_to_heliographic, DiskGeometry};

/// Millionths of the solar hemisphere per square degree.
pub const MSH_PER_SQ_DEG: f64 = 48.5;

/// Lower bounds of importance 1..4 in corrected square degrees.
pub const IMPORTANCE_THRESHOLDS: [f64; 4] = [2.0, 5.15, 12.45, 24.7];

/// H-alpha flare importance class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Importance {
    S,
    One,
    Two,
    Three,
    Four,
}

impl Importance {
    pub fn from_area_sq_deg(area: f64, thresholds: &[f64; 4]) -> Importance {
        if area > thresholds[3] {
            Importance::Four
        } else if area >= thresholds[2] {
            Importance::Three
        } else if area >= thresholds[1] {
            Importance::Two
        } else if area >= thresholds[0] {
            Importance::One
        } else {
            Importance::S
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Importance::S => "S",
            Importance::One => "1",
            Importance::Two => "2",
            Importance::Three => "3",
            Importance::Four => "4",
        }
    }
}

impl fmt::Display for Importance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Importance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" | "s" => Ok(Importance::S),
            "1" => Ok(Importance::One),
            "2" => Ok(Importance::Two),
            "3" => Ok(Importance::Three),
            "4" => Ok(Importance::Four),
            other => Err(Error::Parse(format!("unknown flare importance {other:?}"))),
        }
    }
}

impl Serialize for Importance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Importance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Area of `area_px` pixels centered at normalized radius `radial`,
/// corrected for foreshortening, in millionths of the hemisphere.
pub fn corrected_area_msh(area_px: f64, radial: f64, geom: &DiskGeometry) -> f64 {
    let cos = (1.0 - radial * radial).max(1e-4).sqrt();
    area_px * 1e6 / (2.0 * std::f64::consts::PI * geom.radius * geom.radius * cos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlareReport {
    pub id: u64,
    pub start: DateTime<Utc>,
    pub peak: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub importance: Importance,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub area_msh: f64,
    pub rel_intensity: f64,
}

/// Summarizes a flare track. Importance comes from the largest corrected
/// area; location and relative intensity from the brightest frame.
pub fn classify_flare(track: &EventTrack, geom: &DiskGeometry, b0_deg: f64, thresholds: &[f64; 4]) -> Result<FlareReport> {
    let (Some(first), Some(last), Some(pi)) = (track.frames.first(), track.frames.last(), track.peak_index()) else {
        return Err(Error::InvalidParameter(format!("flare track {} has no frames", track.id)));
    };
    let peak = &track.frames[pi];
    let (lat, lon) = pixel_to_heliographic(geom, peak.centroid, b0_deg).map_err(|_| Error::OffDiskCentroid(track.id))?;
    let area_msh = track.peak_area_msh();
    Ok(FlareReport {
        id: track.id,
        start: first.timestamp,
        peak: peak.timestamp,
        end: last.timestamp,
        importance: Importance::from_area_sq_deg(area_msh / MSH_PER_SQ_DEG, thresholds),
        lat_deg: lat,
        lon_deg: lon,
        area_msh,
        rel_intensity: peak.rel_intensity,
    })
}
