use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full description of a synthetic sequence. Object coordinates are image
/// pixels at frame 0; objects ride along with the disk drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub cadence_s: f64,
    pub start: DateTime<Utc>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub disk: DiskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clouds: Option<CloudSpec>,
    #[serde(default, rename = "filament")]
    pub filaments: Vec<FilamentSpec>,
    #[serde(default, rename = "flare")]
    pub flares: Vec<FlareSpec>,
    #[serde(default, rename = "sunspot")]
    pub sunspots: Vec<SunspotSpec>,
    #[serde(default, rename = "plage")]
    pub plages: Vec<PlageSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSpec {
    pub center: [f64; 2],
    pub radius: f64,
    /// Pixels per frame.
    #[serde(default)]
    pub drift: [f64; 2],
    /// Disk-center intensity in counts.
    #[serde(default = "default_intensity")]
    pub intensity: f64,
    #[serde(default = "default_limb")]
    pub limb_darkening: f64,
    /// Off-disk background level.
    #[serde(default = "default_sky")]
    pub sky: f64,
}

fn default_intensity() -> f64 {
    2400.0
}

fn default_limb() -> f64 {
    0.85
}

fn default_sky() -> f64 {
    60.0
}

/// Smooth multiplicative attenuation built from a few broad Gaussian blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSpec {
    /// Maximum fractional attenuation.
    pub strength: f64,
    #[serde(default = "default_blobs")]
    pub blobs: usize,
    #[serde(default = "default_cloud_sigma")]
    pub sigma_px: f64,
    #[serde(default)]
    pub drift: [f64; 2],
}

fn default_blobs() -> usize {
    3
}

fn default_cloud_sigma() -> f64 {
    150.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilamentSpec {
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_filament_width")]
    pub width: f64,
    /// Fractional darkening of the local disk.
    #[serde(default = "default_filament_contrast")]
    pub contrast: f64,
    #[serde(default)]
    pub start_frame: usize,
    /// First frame without the filament.
    #[serde(default)]
    pub erupt_frame: Option<usize>,
}

fn default_filament_width() -> f64 {
    6.0
}

fn default_filament_contrast() -> f64 {
    0.10
}

impl FilamentSpec {
    pub fn active(&self, k: usize) -> bool {
        k >= self.start_frame && self.erupt_frame.is_none_or(|e| k < e)
    }

    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|s| ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Length-weighted centroid of the polyline.
    pub fn midpoint(&self) -> (f64, f64) {
        let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
        for s in self.points.windows(2) {
            let len = ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt();
            sx += len * (s[0][0] + s[1][0]) / 2.0;
            sy += len * (s[0][1] + s[1][1]) / 2.0;
            total += len;
        }
        if total > 0.0 {
            (sx / total, sy / total)
        } else {
            (self.points[0][0], self.points[0][1])
        }
    }
}

/// Elliptical ribbons brightening over `rise_frames` and fading over
/// `decay_frames`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlareSpec {
    pub center: [f64; 2],
    #[serde(default = "default_ribbons")]
    pub ribbons: usize,
    /// Peak semi-axes of each ribbon.
    #[serde(default = "default_semi_axes")]
    pub semi_axes: [f64; 2],
    #[serde(default)]
    pub angle_deg: f64,
    /// Distance between ribbon centers, across the major axis.
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub onset_frame: usize,
    #[serde(default = "default_rise")]
    pub rise_frames: usize,
    #[serde(default = "default_decay")]
    pub decay_frames: usize,
    /// Added brightness at peak as a fraction of the disk-center intensity.
    #[serde(default = "default_peak_contrast")]
    pub peak_contrast: f64,
    /// Ribbon area at zero profile relative to the peak area.
    #[serde(default = "default_min_area")]
    pub min_area_fraction: f64,
    /// Brightness at zero profile relative to the peak brightness.
    #[serde(default = "default_contrast_floor")]
    pub contrast_floor: f64,
}

fn default_ribbons() -> usize {
    1
}

fn default_semi_axes() -> [f64; 2] {
    [7.0, 3.0]
}

fn default_separation() -> f64 {
    10.0
}

fn default_rise() -> usize {
    5
}

fn default_decay() -> usize {
    20
}

fn default_peak_contrast() -> f64 {
    0.6
}

fn default_min_area() -> f64 {
    0.6
}

fn default_contrast_floor() -> f64 {
    0.5
}

impl FlareSpec {
    pub fn peak_frame(&self) -> usize {
        self.onset_frame + self.rise_frames - 1
    }

    /// Last frame with a visible flare.
    pub fn end_frame(&self) -> usize {
        self.peak_frame() + self.decay_frames
    }

    /// Temporal profile in `(0, 1]` while active, 0 otherwise: linear
    /// rise to 1 at the peak frame, then linear decay.
    pub fn profile(&self, k: usize) -> f64 {
        if k < self.onset_frame || k > self.end_frame() {
            return 0.0;
        }
        let peak = self.peak_frame();
        if k <= peak {
            (k - self.onset_frame + 1) as f64 / self.rise_frames as f64
        } else {
            1.0 - (k - peak) as f64 / (self.decay_frames + 1) as f64
        }
    }

    /// Ribbon area at frame `k` relative to the peak area.
    pub fn area_fraction(&self, k: usize) -> f64 {
        let p = self.profile(k);
        if p == 0.0 {
            0.0
        } else {
            self.min_area_fraction + (1.0 - self.min_area_fraction) * p
        }
    }

    /// Added brightness at frame `k` as a fraction of the disk intensity.
    pub fn contrast(&self, k: usize) -> f64 {
        let p = self.profile(k);
        if p == 0.0 {
            0.0
        } else {
            self.peak_contrast * (self.contrast_floor + (1.0 - self.contrast_floor) * p)
        }
    }

    /// Ribbon centers relative to the flare center.
    pub fn ribbon_offsets(&self) -> Vec<[f64; 2]> {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let normal = [-s, c];
        (0..self.ribbons)
            .map(|j| {
                let t = (j as f64 - (self.ribbons as f64 - 1.0) / 2.0) * self.separation;
                [normal[0] * t, normal[1] * t]
            })
            .collect()
    }

    fn extent(&self) -> f64 {
        self.semi_axes[0].max(self.semi_axes[1]) + self.separation * (self.ribbons as f64 - 1.0) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunspotSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_spot_contrast")]
    pub contrast: f64,
}

fn default_spot_contrast() -> f64 {
    0.5
}

/// Diffuse bright region; labeled as background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlageSpec {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_plage")]
    pub brightness: f64,
}

fn default_plage() -> f64 {
    0.15
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Disk center at frame `k`.
    pub fn disk_center(&self, k: usize) -> [f64; 2] {
        let d = &self.disk;
        [d.center[0] + d.drift[0] * k as f64, d.center[1] + d.drift[1] * k as f64]
    }

    /// Displacement of on-disk objects at frame `k` relative to frame 0.
    pub fn shift(&self, k: usize) -> [f64; 2] {
        [self.disk.drift[0] * k as f64, self.disk.drift[1] * k as f64]
    }

    pub fn timestamp(&self, k: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::milliseconds((k as f64 * self.cadence_s * 1000.0).round() as i64)
    }

    /// Normalized radius reached by a disk of `margin` pixels around
    /// `point`. Objects move with the disk, so this holds for every frame.
    fn reach(&self, point: [f64; 2], margin: f64) -> f64 {
        let d = [point[0] - self.disk.center[0], point[1] - self.disk.center[1]];
        ((d[0] * d[0] + d[1] * d[1]).sqrt() + margin) / self.disk.radius
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(invalid(format!("frame {}x{} is too small", self.width, self.height)));
        }
        if self.frames == 0 {
            return Err(invalid("scenario has no frames"));
        }
        if !(self.cadence_s > 0.0 && self.cadence_s.is_finite()) {
            return Err(invalid(format!("cadence {} s", self.cadence_s)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid(format!("noise sigma {}", self.noise_sigma)));
        }
        let d = &self.disk;
        let finite = d.center.iter().chain(&d.drift).all(|v| v.is_finite());
        if !finite || !(d.radius > 0.0 && d.radius.is_finite()) {
            return Err(invalid("disk center, drift and radius must be finite with radius > 0"));
        }
        if !(0.0..=1.0).contains(&d.limb_darkening) {
            return Err(invalid(format!("limb darkening {} outside [0, 1]", d.limb_darkening)));
        }
        if !(d.intensity > 0.0 && d.intensity < 4096.0) || !(0.0..4096.0).contains(&d.sky) {
            return Err(invalid("disk intensity and sky must lie in the 12-bit range"));
        }
        if let Some(c) = &self.clouds {
            if !(0.0..1.0).contains(&c.strength) {
                return Err(invalid(format!("cloud strength {} outside [0, 1)", c.strength)));
            }
            if !(c.sigma_px >= 100.0) {
                return Err(invalid(format!("cloud sigma {} px is below 100 px", c.sigma_px)));
            }
        }
        for (i, f) in self.filaments.iter().enumerate() {
            if f.points.len() < 2 {
                return Err(invalid(format!("filament {i} needs at least two points")));
            }
            if !(f.width > 0.0) || !(f.contrast > 0.0 && f.contrast < 1.0) {
                return Err(invalid(format!("filament {i}: width must be > 0 and contrast in (0, 1)")));
            }
            if f.erupt_frame.is_some_and(|e| e <= f.start_frame) {
                return Err(invalid(format!("filament {i} erupts before it appears")));
            }
            for p in &f.points {
                if self.reach(*p, f.width / 2.0) > 1.0 {
                    return Err(invalid(format!("filament {i} point ({}, {}) leaves the disk", p[0], p[1])));
                }
            }
        }
        for (i, f) in self.flares.iter().enumerate() {
            if !(1..=2).contains(&f.ribbons) {
                return Err(invalid(format!("flare {i}: ribbons must be 1 or 2")));
            }
            if f.rise_frames == 0 {
                return Err(invalid(format!("flare {i}: rise_frames must be at least 1")));
            }
            if !(f.semi_axes[0] > 0.0 && f.semi_axes[1] > 0.0) || !(f.peak_contrast > 0.0) {
                return Err(invalid(format!("flare {i}: semi-axes and peak contrast must be positive")));
            }
            if !(f.min_area_fraction > 0.0 && f.min_area_fraction <= 1.0) || !(0.0..=1.0).contains(&f.contrast_floor) {
                return Err(invalid(format!("flare {i}: area fraction in (0, 1] and contrast floor in [0, 1]")));
            }
            if self.reach(f.center, f.extent()) > 1.0 {
                return Err(invalid(format!("flare {i} at ({}, {}) leaves the disk", f.center[0], f.center[1])));
            }
        }
        for (i, s) in self.sunspots.iter().enumerate() {
            if !(s.radius > 0.0) || !(s.contrast > 0.0 && s.contrast <= 1.0) {
                return Err(invalid(format!("sunspot {i}: radius > 0 and contrast in (0, 1]")));
            }
            if self.reach(s.center, s.radius) > 1.0 {
                return Err(invalid(format!("sunspot {i} leaves the disk")));
            }
        }
        for (i, p) in self.plages.iter().enumerate() {
            if !(p.radius > 0.0) || !(p.brightness >= 0.0) {
                return Err(invalid(format!("plage {i}: radius > 0 and brightness >= 0")));
            }
            if self.reach(p.center, p.radius) > 1.0 {
                return Err(invalid(format!("plage {i} leaves the disk")));
            }
        }
        Ok(())
    }
}
