use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::track::{EventTrack, TrackStatus};
use crate::imgio::{pixel_to_heliographic, DiskGeometry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EruptionParams {
    /// Absence after which a filament counts as erupted.
    pub window_s: f64,
    /// Minimum number of frames a filament must have been tracked.
    pub min_frames: usize,
    /// Tracks last seen beyond this normalized radius end without a report.
    pub limb_guard_radial: Option<f64>,
}

impl Default for EruptionParams {
    fn default() -> Self {
        Self {
            window_s: 900.0,
            min_frames: 3,
            limb_guard_radial: Some(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EruptionReport {
    pub id: u64,
    pub last_seen: DateTime<Utc>,
    /// Time at which the absence reached the window.
    pub disappearance: DateTime<Utc>,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub length_px: f64,
}

/// Retires filament tracks absent for at least the window, reporting an
/// eruption for each that was tracked long enough away from the limb.
pub fn detect_eruptions<'a>(
    tracks: impl IntoIterator<Item = &'a mut EventTrack>,
    now: DateTime<Utc>,
    params: &EruptionParams,
    geom: &DiskGeometry,
    b0_deg: f64,
) -> Vec<EruptionReport> {
    let window_ms = (params.window_s * 1000.0).round() as i64;
    let mut out = Vec::new();
    for t in tracks {
        if t.status != TrackStatus::Active {
            continue;
        }
        let Some(last) = t.last_frame() else {
            continue;
        };
        if (now - last.timestamp).num_milliseconds() < window_ms {
            continue;
        }
        let near_limb = params.limb_guard_radial.is_some_and(|r| last.radial > r);
        let location = pixel_to_heliographic(geom, last.centroid, b0_deg);
        match location {
            Ok((lat, lon)) if !near_limb && t.frames.len() >= params.min_frames => {
                out.push(EruptionReport {
                    id: t.id,
                    last_seen: last.timestamp,
                    disappearance: now,
                    lat_deg: lat,
                    lon_deg: lon,
                    length_px: last.length_px.unwrap_or(0.0),
                });
                t.status = TrackStatus::Erupted;
            }
            _ => t.status = TrackStatus::Ended,
        }
    }
    out
}
