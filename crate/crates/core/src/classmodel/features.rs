use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::imgio::{DiskGeometry, FrameBuffer};

/// Label value for pixels without annotation.
pub const UNLABELED: u8 = 255;

/// One training pixel: bandpassed intensity and normalized disk-center
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSample {
    pub intensity: f64,
    pub radial: f64,
    pub label: u8,
}

impl FeatureSample {
    pub fn features(&self) -> [f64; 2] {
        [self.intensity, self.radial]
    }
}

/// Feature vector of pixel `(x, y)`.
#[inline]
pub fn pixel_features(frame: &FrameBuffer, geom: &DiskGeometry, x: usize, y: usize) -> [f64; 2] {
    [frame.get(x, y) as f64, geom.radial(x as f64, y as f64)]
}

/// Collects labeled on-disk pixels, keeping at most `cap_per_class` per
/// class by seeded uniform subsampling.
pub fn samples_from_mask(
    frame: &FrameBuffer,
    geom: &DiskGeometry,
    mask: &[u8],
    cap_per_class: usize,
    seed: u64,
) -> Result<Vec<FeatureSample>> {
    if mask.len() != frame.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} pixels, frame {}",
            mask.len(),
            frame.len()
        )));
    }
    let w = frame.width();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in mask.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        if l as usize >= NUM_CLASSES {
            return Err(Error::Parse(format!("annotation value {l} is not a class id")));
        }
        if geom.radial((i % w) as f64, (i / w) as f64) <= 1.0 {
            per_class[l as usize].push(i);
        }
    }
    let mut out = Vec::new();
    for (class, idx) in per_class.into_iter().enumerate() {
        let chosen: Vec<usize> = if idx.len() > cap_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut picks: Vec<usize> = sample(&mut rng, idx.len(), cap_per_class).into_iter().map(|j| idx[j]).collect();
            picks.sort_unstable();
            picks
        } else {
            idx
        };
        out.extend(chosen.into_iter().map(|i| {
            let [intensity, radial] = pixel_features(frame, geom, i % w, i / w);
            FeatureSample {
                intensity,
                radial,
                label: class as u8,
            }
        }));
    }
    Ok(out)
}
