//! Synthetic H-alpha sequences with pixel-exact ground truth.
//!
//! A [`Scenario`] describes a drifting limb-darkened disk, slow clouds,
//! Gaussian noise and a list of objects. [`generate_sequence`] renders
//! 12-bit frames, label maps and a log of the true events.

mod render;
mod scenario;

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use scenario::{CloudSpec, DiskSpec, FilamentSpec, FlareSpec, PlageSpec, Scenario, SunspotSpec};

use crate::classmodel::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::eval::ReferenceEvent;
use crate::events::{corrected_area_msh, EventKind, Importance, IMPORTANCE_THRESHOLDS, MSH_PER_SQ_DEG};
use crate::imgio::{pixel_to_heliographic, timestamp_name, write_pgm16, write_pgm8, DiskGeometry, FrameBuffer};
use crate::par::{map_collect, Exec};
use crate::segment::LabelMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueFlare {
    /// Index into the scenario's flare list.
    pub object: usize,
    pub start_frame: usize,
    pub peak_frame: usize,
    pub end_frame: usize,
    pub start: DateTime<Utc>,
    pub peak: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub importance: Importance,
    pub peak_area_px: usize,
    pub area_msh: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEruption {
    /// Index into the scenario's filament list.
    pub object: usize,
    pub last_frame: usize,
    pub erupt_frame: usize,
    pub time: DateTime<Utc>,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub length_px: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub flares: Vec<TrueFlare>,
    pub eruptions: Vec<TrueEruption>,
}

impl EventLog {
    /// Catalog rows in the evaluation reference format.
    pub fn reference(&self) -> Vec<ReferenceEvent> {
        let mut out: Vec<ReferenceEvent> = self
            .flares
            .iter()
            .map(|f| ReferenceEvent {
                kind: EventKind::Flare,
                start: f.start,
                end: f.end,
                importance: Some(f.importance),
                lat: f.lat_deg,
                lon: f.lon_deg,
            })
            .chain(self.eruptions.iter().map(|e| ReferenceEvent {
                kind: EventKind::FilamentEruption,
                start: e.time,
                end: e.time,
                importance: None,
                lat: e.lat_deg,
                lon: e.lon_deg,
            }))
            .collect();
        out.sort_by_key(|r| r.start);
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<FrameBuffer>,
    pub truth: Vec<LabelMap>,
    pub events: EventLog,
}

impl Scenario {
    /// Geometry of the disk at frame `k`.
    pub fn geometry(&self, k: usize) -> DiskGeometry {
        let c = self.disk_center(k);
        DiskGeometry {
            center_x: c[0],
            center_y: c[1],
            radius: self.disk.radius,
        }
    }

    /// 60 frames of 512² at 30 s cadence with two filaments (one erupting
    /// at frame 40), an importance-1 flare, a sunspot, a plage and light
    /// clouds.
    pub fn demo() -> Scenario {
        Scenario::from_toml(DEMO).expect("bundled demo scenario is valid")
    }
}

/// Text of the bundled demo scenario.
pub const DEMO: &str = r#"seed = 2012
width = 512
height = 512
frames = 60
cadence_s = 30.0
start = "2012-07-04T08:00:00Z"
noise_sigma = 8.0

[disk]
center = [256.0, 256.0]
radius = 240.0
drift = [0.05, -0.03]
intensity = 2400.0
limb_darkening = 0.85
sky = 60.0

[clouds]
strength = 0.12
blobs = 3
sigma_px = 160.0
drift = [1.0, 0.5]

[[filament]]
points = [[150.0, 200.0], [190.0, 185.0], [235.0, 190.0]]
contrast = 0.10
erupt_frame = 40

[[filament]]
points = [[300.0, 330.0], [330.0, 350.0], [370.0, 352.0]]
contrast = 0.10

[[flare]]
center = [330.0, 200.0]
angle_deg = 20.0
onset_frame = 15

[[sunspot]]
center = [360.0, 190.0]
radius = 6.0

[[plage]]
center = [345.0, 210.0]
radius = 30.0
brightness = 0.12
"#;

fn centroid(pixels: impl Iterator<Item = usize>, width: usize) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for i in pixels {
        sx += (i % width) as f64;
        sy += (i / width) as f64;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

fn event_log(s: &Scenario) -> Result<EventLog> {
    let mut log = EventLog::default();
    for (j, f) in s.flares.iter().enumerate() {
        if f.onset_frame >= s.frames {
            continue;
        }
        let end = f.end_frame().min(s.frames - 1);
        let peak = f.peak_frame().min(end);
        let pixels = render::flare_pixels(f, peak, s.shift(peak), s.width, s.height);
        let geom = s.geometry(peak);
        let (cx, cy) = centroid(pixels.iter().copied(), s.width)
            .ok_or_else(|| Error::InvalidScenario(format!("flare {j} covers no pixels")))?;
        let (lat, lon) = pixel_to_heliographic(&geom, (cx, cy), 0.0)?;
        let area_msh = corrected_area_msh(pixels.len() as f64, geom.radial(cx, cy), &geom);
        log.flares.push(TrueFlare {
            object: j,
            start_frame: f.onset_frame,
            peak_frame: peak,
            end_frame: end,
            start: s.timestamp(f.onset_frame),
            peak: s.timestamp(peak),
            end: s.timestamp(end),
            importance: Importance::from_area_sq_deg(area_msh / MSH_PER_SQ_DEG, &IMPORTANCE_THRESHOLDS),
            peak_area_px: pixels.len(),
            area_msh,
            lat_deg: lat,
            lon_deg: lon,
        });
    }
    for (j, f) in s.filaments.iter().enumerate() {
        let Some(e) = f.erupt_frame.filter(|&e| e < s.frames) else {
            continue;
        };
        let last = e - 1;
        let shift = s.shift(last);
        let (cx, cy) = f.midpoint();
        let (cx, cy) = (cx + shift[0], cy + shift[1]);
        let (lat, lon) = pixel_to_heliographic(&s.geometry(last), (cx, cy), 0.0)?;
        log.eruptions.push(TrueEruption {
            object: j,
            last_frame: last,
            erupt_frame: e,
            time: s.timestamp(e),
            lat_deg: lat,
            lon_deg: lon,
            length_px: f.length(),
        });
    }
    Ok(log)
}

/// Renders every frame of `scenario`. Frames are independent given the
/// seed, so `exec` only affects speed.
pub fn generate_sequence(scenario: &Scenario, exec: Exec) -> Result<SyntheticSequence> {
    scenario.validate()?;
    let s = scenario;
    let blobs = render::cloud_blobs(s);
    let rendered = map_collect(exec, s.frames, |k| render::render(s, &blobs, k));
    let mut frames = Vec::with_capacity(s.frames);
    let mut truth = Vec::with_capacity(s.frames);
    for (k, (data, labels)) in rendered.into_iter().enumerate() {
        let ts = s.timestamp(k);
        frames.push(FrameBuffer::new(s.width, s.height, data, ts, k)?);
        truth.push(LabelMap::new(s.width, s.height, NUM_CLASSES, labels, ts, k)?);
    }
    let events = event_log(s)?;
    Ok(SyntheticSequence { frames, truth, events })
}

/// Files written by [`write_sequence`], relative to the output directory.
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAINING_FILE: &str = "training.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const REFERENCE_FILE: &str = "reference.csv";

/// Writes 16-bit frames, class-id masks, a frame manifest, a training
/// list, the event log and a reference catalog under `dir`.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    for sub in ["frames", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut manifest = String::from("path,timestamp\n");
    let mut training = String::from("frame,mask\n");
    for (frame, labels) in seq.frames.iter().zip(&seq.truth) {
        let name = timestamp_name(frame.timestamp());
        let fp = format!("frames/frame_{name}.pgm");
        let mp = format!("masks/mask_{name}.pgm");
        write_pgm16(dir.join(&fp), frame)?;
        write_pgm8(dir.join(&mp), labels.width(), labels.height(), labels.labels())?;
        manifest.push_str(&format!("{fp},{}\n", crate::rfc3339(frame.timestamp())));
        training.push_str(&format!("{fp},{mp}\n"));
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(MANIFEST_FILE, &manifest)?;
    write(TRAINING_FILE, &training)?;
    let json = serde_json::to_string_pretty(&seq.events).expect("event log serializes");
    write(EVENTS_FILE, &(json + "\n"))?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in seq.events.reference() {
        csv.serialize(&r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    if seq.events.reference().is_empty() {
        csv.write_record(["type", "start", "end", "importance", "lat", "lon"])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    write(REFERENCE_FILE, &String::from_utf8(bytes).expect("csv is utf-8"))
}
