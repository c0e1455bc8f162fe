use chrono::{DateTime, Utc};

use super::gmm::{gmm_nll, GmmModel, NLL_MAX};
use super::{Class, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::imgio::{DiskGeometry, FrameBuffer};
use crate::par::{rows_mut, Exec};

/// Pixels beyond this normalized radius are forced to background.
pub const OFF_DISK_RADIAL: f64 = 1.02;

/// Per-class negative log-probability planes of one frame, stored
/// pixel-interleaved (`data[i * classes + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f32>,
    timestamp: DateTime<Utc>,
    frame_index: usize,
}

impl ProbVolume {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        data: Vec<f32>,
        timestamp: DateTime<Utc>,
        frame_index: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || classes == 0 {
            return Err(Error::InvalidFrame("empty probability volume".into()));
        }
        if data.len() != width * height * classes {
            return Err(Error::DimensionMismatch(format!(
                "volume {width}x{height}x{classes} needs {} values, got {}",
                width * height * classes,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite(i));
        }
        Ok(ProbVolume {
            width,
            height,
            classes,
            data,
            timestamp,
            frame_index,
        })
    }

    /// Builds a volume from one plane per class.
    pub fn from_planes(
        width: usize,
        height: usize,
        planes: &[Vec<f32>],
        timestamp: DateTime<Utc>,
        frame_index: usize,
    ) -> Result<Self> {
        let n = width * height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch(format!("plane has {} values, expected {n}", p.len())));
        }
        let k = planes.len();
        let mut data = vec![0.0f32; n * k];
        for (c, p) in planes.iter().enumerate() {
            for (i, v) in p.iter().enumerate() {
                data[i * k + c] = *v;
            }
        }
        ProbVolume::new(width, height, k, data, timestamp, frame_index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn plane(&self, k: usize) -> Vec<f32> {
        self.data.iter().skip(k).step_by(self.classes).copied().collect()
    }

    /// Pointwise minimum-cost class, ties to the lowest index.
    pub fn argmin(&self) -> Vec<u8> {
        self.data
            .chunks_exact(self.classes)
            .map(|c| {
                let mut best = 0;
                for k in 1..c.len() {
                    if c[k] < c[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect()
    }

    fn same_shape(&self, other: &ProbVolume) -> bool {
        self.width == other.width && self.height == other.height && self.classes == other.classes
    }
}

/// Evaluates every class NLL at every pixel of a bandpassed frame.
pub fn class_prob_volume(
    frame: &FrameBuffer,
    geom: &DiskGeometry,
    model: &GmmModel,
    exec: Exec,
) -> Result<ProbVolume> {
    if model.classes() != NUM_CLASSES {
        return Err(Error::InvalidParameter(format!(
            "model has {} classes, expected {NUM_CLASSES}",
            model.classes()
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    let k = NUM_CLASSES;
    let bg = Class::Background as usize;
    let src = frame.data();
    let mut data = vec![0.0f32; w * h * k];
    rows_mut(exec, &mut data, w * k, |y, row| {
        for x in 0..w {
            let out = &mut row[x * k..(x + 1) * k];
            let radial = geom.radial(x as f64, y as f64);
            if radial > OFF_DISK_RADIAL {
                out.fill(NLL_MAX as f32);
                out[bg] = 0.0;
                continue;
            }
            let f = [src[y * w + x] as f64, radial];
            for (c, slot) in out.iter_mut().enumerate() {
                *slot = gmm_nll(model, c, f) as f32;
            }
        }
    });
    ProbVolume::new(w, h, k, data, frame.timestamp(), frame.frame_index())
}

/// Exponential moving average of NLL volumes:
/// `alpha * current + (1 - alpha) * previous`.
pub fn temporal_average(previous: Option<&ProbVolume>, current: &ProbVolume, alpha: f64) -> Result<ProbVolume> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("temporal alpha {alpha} outside (0, 1]")));
    }
    let Some(prev) = previous else {
        return Ok(current.clone());
    };
    if !prev.same_shape(current) {
        return Err(Error::DimensionMismatch(format!(
            "volumes {}x{}x{} and {}x{}x{}",
            prev.width, prev.height, prev.classes, current.width, current.height, current.classes
        )));
    }
    let a = alpha as f32;
    let data = current
        .data
        .iter()
        .zip(&prev.data)
        .map(|(c, p)| if c == p { *c } else { a * c + (1.0 - a) * p })
        .collect();
    Ok(ProbVolume {
        data,
        ..current.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classmodel::Mixture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> GmmModel {
        let comp = |mu: [f64; 2]| Mixture {
            weights: vec![0.6, 0.4],
            means: vec![mu, [mu[0] + 0.3, mu[1] - 0.2]],
            covariances: vec![[0.2, 0.01, 0.3], [0.4, -0.05, 0.2]],
        };
        GmmModel::from_parts(
            [100.0, 0.5],
            [40.0, 0.3],
            vec![comp([-3.0, 0.0]), comp([-1.5, 0.5]), comp([3.0, 0.0]), comp([0.0, 0.0])],
        )
        .unwrap()
    }

    fn vol(v: f32) -> ProbVolume {
        ProbVolume::new(3, 2, 4, vec![v; 24], DateTime::<Utc>::UNIX_EPOCH, 0).unwrap()
    }

    #[test]
    fn averaging_rules() {
        let cur = ProbVolume::new(3, 2, 4, (0..24).map(|i| i as f32 * 0.5).collect(), DateTime::<Utc>::UNIX_EPOCH, 1).unwrap();
        assert_eq!(temporal_average(Some(&vol(7.0)), &cur, 1.0).unwrap(), cur);
        assert_eq!(temporal_average(None, &cur, 0.3).unwrap(), cur);
        for a in [0.1, 0.5, 0.77] {
            assert_eq!(temporal_average(Some(&cur), &cur, a).unwrap(), cur);
        }
        let out = temporal_average(Some(&vol(0.0)), &vol(1.0), 0.25).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.25));
        let other = ProbVolume::new(2, 3, 4, vec![0.0; 24], DateTime::<Utc>::UNIX_EPOCH, 0).unwrap();
        assert!(matches!(temporal_average(Some(&other), &cur, 0.5), Err(Error::DimensionMismatch(_))));
        assert!(temporal_average(Some(&cur), &cur, 0.0).is_err());
    }

    #[test]
    fn off_disk_pixels_are_background() {
        let m = model();
        let f = FrameBuffer::filled(40, 40, 80.0, DateTime::<Utc>::UNIX_EPOCH).unwrap();
        let g = DiskGeometry::new(20.0, 20.0, 10.0).unwrap();
        let v = class_prob_volume(&f, &g, &m, Exec::Sequential).unwrap();
        assert_eq!(v.pixel(0), &[50.0, 50.0, 50.0, 0.0]);
        assert!(v.pixel(20 * 40 + 20)[..3].iter().any(|x| *x < 50.0));
    }

    #[test]
    fn mode_pixel_prefers_its_class_and_argmin_is_bayes() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (48, 48);
        let g = DiskGeometry::new(24.0, 24.0, 22.0).unwrap();
        let mut data: Vec<f32> = (0..w * h).map(|_| rng.random_range(-60.0..260.0)).collect();
        let sunspot_mode = m.raw_component(0, 0).0;
        data[24 * w + 24] = sunspot_mode[0] as f32;
        let f = FrameBuffer::new(w, h, data, DateTime::<Utc>::UNIX_EPOCH, 0).unwrap();
        let seq = class_prob_volume(&f, &g, &m, Exec::Sequential).unwrap();
        let par = class_prob_volume(&f, &g, &m, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert!(seq.data().iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 50.0));
        let arg = seq.argmin();
        assert_eq!(arg[24 * w + 24], 0);
        for y in 0..h {
            for x in 0..w {
                let r = g.radial(x as f64, y as f64);
                if r > OFF_DISK_RADIAL {
                    assert_eq!(arg[y * w + x], 3);
                    continue;
                }
                let feat = [f.get(x, y) as f64, r];
                let dens: Vec<f64> = (0..4).map(|c| m.mixture(c).log_density(m.standardize(feat))).collect();
                let best = (0..4).max_by(|a, b| dens[*a].total_cmp(&dens[*b]).then(b.cmp(a))).unwrap();
                let nll = seq.pixel(y * w + x);
                if nll[best] < 50.0 && dens.iter().filter(|d| (**d - dens[best]).abs() < 1e-5).count() == 1 {
                    assert_eq!(arg[y * w + x] as usize, best, "pixel {x},{y}");
                }
            }
        }
    }
}
