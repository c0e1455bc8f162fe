use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel image with observation time.
///
/// Pixels are row-major `f32`. Every constructor checks that the buffer is
/// non-empty, matches `width * height` and holds only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
    timestamp: DateTime<Utc>,
    frame_index: usize,
}

impl FrameBuffer {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f32>,
        timestamp: DateTime<Utc>,
        frame_index: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "buffer holds {} samples, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame(format!(
                "non-finite sample at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            timestamp,
            frame_index,
        })
    }

    /// Frame of constant value.
    pub fn filled(width: usize, height: usize, value: f32, timestamp: DateTime<Utc>) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], timestamp, 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn set_frame_index(&mut self, index: usize) {
        self.frame_index = index;
    }

    pub fn set_timestamp(&mut self, timestamp: DateTime<Utc>) {
        self.timestamp = timestamp;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Same geometry and metadata, new pixels.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.width, self.height, data, self.timestamp, self.frame_index)
    }

    pub fn same_shape(&self, other: &FrameBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &FrameBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Bilinear sample with replicated borders.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[inline]
pub(crate) fn bilinear(data: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let xc = x.clamp(0.0, (width - 1) as f32);
    let yc = y.clamp(0.0, (height - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let a = data[y0 * width + x0];
    let b = data[y0 * width + x1];
    let c = data[y1 * width + x0];
    let d = data[y1 * width + x1];
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

/// Solar disk center and radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

impl DiskGeometry {
    pub fn new(center_x: f64, center_y: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center_x.is_finite() && center_y.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "disk ({center_x}, {center_y}) r={radius}"
            )));
        }
        Ok(Self {
            center_x,
            center_y,
            radius,
        })
    }

    /// Distance from the disk center in units of the radius.
    #[inline]
    pub fn radial(&self, x: f64, y: f64) -> f64 {
        ((x - self.center_x).powi(2) + (y - self.center_y).powi(2)).sqrt() / self.radius
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.radial(x, y) < 1.0
    }

    /// True when the center lies within twice the frame bounds.
    pub fn plausible_for(&self, width: usize, height: usize) -> bool {
        let (w, h) = (width as f64, height as f64);
        self.center_x > -w && self.center_x < 2.0 * w && self.center_y > -h && self.center_y < 2.0 * h
    }
}

/// Ordered list of frames to process.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceManifest {
    entries: Vec<(PathBuf, DateTime<Utc>)>,
    pub cadence_hint: f64,
}

impl SequenceManifest {
    pub fn new(entries: Vec<(PathBuf, DateTime<Utc>)>, cadence_hint: f64) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].1 <= pair[0].1 {
                return Err(Error::Parse(format!(
                    "manifest timestamps not strictly increasing at {}",
                    pair[1].0.display()
                )));
            }
        }
        Ok(Self {
            entries,
            cadence_hint,
        })
    }

    pub fn entries(&self) -> &[(PathBuf, DateTime<Utc>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `path,timestamp` lines. Relative paths resolve against `base`.
    /// Blank lines, `#` comments and a `path,timestamp` header are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "path,timestamp" {
                continue;
            }
            let (path, ts) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Parse(format!("manifest line {}: expected path,timestamp", lineno + 1)))?;
            let ts = DateTime::parse_from_rfc3339(ts.trim())
                .map_err(|e| Error::Parse(format!("manifest line {}: {e}", lineno + 1)))?
                .with_timezone(&Utc);
            let path = PathBuf::from(path.trim());
            let path = if path.is_relative() { base.join(path) } else { path };
            entries.push((path, ts));
        }
        let cadence = match (entries.first(), entries.last()) {
            (Some(a), Some(b)) if entries.len() > 1 => {
                (b.1 - a.1).num_milliseconds() as f64 / 1000.0 / (entries.len() - 1) as f64
            }
            _ => 0.0,
        };
        Self::new(entries, cadence)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("path,timestamp\n");
        for (p, t) in &self.entries {
            out.push_str(&format!("{},{}\n", p.display(), crate::rfc3339(*t)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2012, 7, 2, 8, 0, 0).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(FrameBuffer::new(0, 3, vec![], t0(), 0).is_err());
        assert!(FrameBuffer::new(2, 2, vec![0.0; 3], t0(), 0).is_err());
        assert!(FrameBuffer::new(2, 1, vec![0.0, f32::NAN], t0(), 0).is_err());
        assert!(FrameBuffer::new(2, 1, vec![0.0, 1.0], t0(), 0).is_ok());
    }

    #[test]
    fn bilinear_is_exact_on_grid_and_interpolates() {
        let f = FrameBuffer::new(2, 2, vec![0.0, 1.0, 2.0, 3.0], t0(), 0).unwrap();
        assert_eq!(f.sample_bilinear(1.0, 1.0), 3.0);
        assert_eq!(f.sample_bilinear(0.5, 0.5), 1.5);
        assert_eq!(f.sample_bilinear(-4.0, 0.0), 0.0);
    }

    #[test]
    fn manifest_requires_increasing_times() {
        let text = "path,timestamp\na.pgm,2012-07-02T08:00:00Z\nb.pgm,2012-07-02T08:00:30Z\n";
        let m = SequenceManifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].0, PathBuf::from("/data/a.pgm"));
        assert!((m.cadence_hint - 30.0).abs() < 1e-9);
        let bad = "a.pgm,2012-07-02T08:00:30Z\nb.pgm,2012-07-02T08:00:30Z\n";
        assert!(SequenceManifest::parse(bad, Path::new(".")).is_err());
    }
}
