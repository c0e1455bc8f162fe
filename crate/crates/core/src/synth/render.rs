use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{FilamentSpec, FlareSpec, Scenario};
use crate::classmodel::Class;

/// Per-pixel object contributions of one frame before disk, clouds and
/// noise are applied.
pub(crate) struct Layers {
    pub mult: Vec<f32>,
    pub add: Vec<f32>,
    pub labels: Vec<u8>,
    rank: Vec<u8>,
    width: usize,
    height: usize,
}

fn rank(class: Class) -> u8 {
    match class {
        Class::Sunspot => 3,
        Class::Flare => 2,
        Class::Filament => 1,
        Class::Background => 0,
    }
}

impl Layers {
    fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            mult: vec![1.0; n],
            add: vec![0.0; n],
            labels: vec![Class::Background.id(); n],
            rank: vec![0; n],
            width,
            height,
        }
    }

    fn label(&mut self, i: usize, class: Class) {
        if rank(class) > self.rank[i] {
            self.rank[i] = rank(class);
            self.labels[i] = class.id();
        }
    }

    /// Pixel index range covering `center ± r`, clipped to the frame.
    fn window(&self, lo: [f64; 2], hi: [f64; 2]) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let clip = |v: f64, n: usize| v.clamp(0.0, n as f64) as usize;
        (
            clip(lo[0].floor(), self.width)..clip(hi[0].ceil() + 1.0, self.width),
            clip(lo[1].floor(), self.height)..clip(hi[1].ceil() + 1.0, self.height),
        )
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

fn filament(layers: &mut Layers, f: &FilamentSpec, shift: [f64; 2]) {
    let pts: Vec<[f64; 2]> = f.points.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
    let half = f.width / 2.0;
    let lo = pts.iter().fold([f64::INFINITY; 2], |m, p| [m[0].min(p[0]), m[1].min(p[1])]);
    let hi = pts.iter().fold([f64::NEG_INFINITY; 2], |m, p| [m[0].max(p[0]), m[1].max(p[1])]);
    let pad = half + 1.0;
    let (xs, ys) = layers.window([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad]);
    for y in ys {
        for x in xs.clone() {
            let p = [x as f64, y as f64];
            let d = pts.windows(2).map(|s| seg_dist(p, s[0], s[1])).fold(f64::INFINITY, f64::min);
            let cover = (half + 0.5 - d).clamp(0.0, 1.0);
            if cover == 0.0 {
                continue;
            }
            let i = y * layers.width + x;
            layers.mult[i] *= (1.0 - f.contrast * cover) as f32;
            if d <= half {
                layers.label(i, Class::Filament);
            }
        }
    }
}

/// Pixel indices covered by the flare ribbons at frame `k`.
pub(crate) fn flare_pixels(f: &FlareSpec, k: usize, shift: [f64; 2], width: usize, height: usize) -> Vec<usize> {
    let frac = f.area_fraction(k);
    if frac == 0.0 {
        return Vec::new();
    }
    let scale = frac.sqrt();
    let (a, b) = (f.semi_axes[0] * scale, f.semi_axes[1] * scale);
    let (s, c) = f.angle_deg.to_radians().sin_cos();
    let r = a.max(b);
    let mut out = Vec::new();
    for off in f.ribbon_offsets() {
        let ctr = [f.center[0] + shift[0] + off[0], f.center[1] + shift[1] + off[1]];
        let y0 = (ctr[1] - r).floor().max(0.0) as usize;
        let y1 = ((ctr[1] + r).ceil().max(-1.0) as usize).min(height - 1);
        let x0 = (ctr[0] - r).floor().max(0.0) as usize;
        let x1 = ((ctr[0] + r).ceil().max(-1.0) as usize).min(width - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - ctr[0], y as f64 - ctr[1]);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    out.push(y * width + x);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn flare(layers: &mut Layers, f: &FlareSpec, k: usize, shift: [f64; 2], intensity: f64) {
    let add = (f.contrast(k) * intensity) as f32;
    for i in flare_pixels(f, k, shift, layers.width, layers.height) {
        layers.add[i] = layers.add[i].max(add);
        layers.label(i, Class::Flare);
    }
}

fn disk_object(layers: &mut Layers, center: [f64; 2], radius: f64, mut apply: impl FnMut(&mut Layers, usize, f64)) {
    let (xs, ys) = layers.window(
        [center[0] - radius - 1.0, center[1] - radius - 1.0],
        [center[0] + radius + 1.0, center[1] + radius + 1.0],
    );
    for y in ys {
        for x in xs.clone() {
            let d = ((x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2)).sqrt();
            apply(layers, y * layers.width + x, d);
        }
    }
}

/// Object layers of frame `k`.
pub(crate) fn layers(s: &Scenario, k: usize) -> Layers {
    let mut l = Layers::new(s.width, s.height);
    let shift = s.shift(k);
    let at = |c: [f64; 2]| [c[0] + shift[0], c[1] + shift[1]];
    for p in &s.plages {
        let add = p.brightness * s.disk.intensity;
        disk_object(&mut l, at(p.center), p.radius, |l, i, d| {
            if d < p.radius {
                let w = 0.5 * (1.0 + (std::f64::consts::PI * d / p.radius).cos());
                l.add[i] += (add * w) as f32;
            }
        });
    }
    for f in s.filaments.iter().filter(|f| f.active(k)) {
        filament(&mut l, f, shift);
    }
    for f in &s.flares {
        flare(&mut l, f, k, shift, s.disk.intensity);
    }
    for sp in &s.sunspots {
        disk_object(&mut l, at(sp.center), sp.radius, |l, i, d| {
            let cover = (sp.radius + 0.5 - d).clamp(0.0, 1.0);
            l.mult[i] *= (1.0 - sp.contrast * cover) as f32;
            if d <= sp.radius {
                l.label(i, Class::Sunspot);
            }
        });
    }
    l
}

/// Broad cloud blobs: position, amplitude.
pub(crate) type CloudBlob = ([f64; 2], f64);

pub(crate) fn cloud_blobs(s: &Scenario) -> Vec<CloudBlob> {
    let Some(c) = &s.clouds else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    (0..c.blobs)
        .map(|_| {
            let pos = [rng.random::<f64>() * s.width as f64, rng.random::<f64>() * s.height as f64];
            (pos, 0.5 + 0.5 * rng.random::<f64>())
        })
        .collect()
}

/// Renders frame `k`: disk with limb darkening, objects, clouds, noise,
/// quantized to 12 bits. Returns intensities and labels.
pub(crate) fn render(s: &Scenario, blobs: &[CloudBlob], k: usize) -> (Vec<f32>, Vec<u8>) {
    let l = layers(s, k);
    let (w, h) = (s.width, s.height);
    let d = &s.disk;
    let ctr = s.disk_center(k);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(k as u64 + 1);
    let noise = Normal::new(0.0, s.noise_sigma.max(0.0)).expect("finite sigma");
    let cloud = s.clouds.as_ref();
    let mut data = Vec::with_capacity(w * h);
    let mut labels = l.labels;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (x as f64 - ctr[0], y as f64 - ctr[1]);
            let r = (dx * dx + dy * dy).sqrt();
            let rho = r / d.radius;
            let cover = (d.radius + 0.5 - r).clamp(0.0, 1.0);
            let mu = (1.0 - rho.min(1.0).powi(2)).sqrt();
            let limb = d.intensity * (1.0 - d.limb_darkening * (1.0 - mu));
            let disk = cover * (limb * l.mult[i] as f64 + l.add[i] as f64);
            let attenuation = cloud.map_or(1.0, |c| {
                let field: f64 = blobs
                    .iter()
                    .map(|(p, a)| {
                        let bx = p[0] + c.drift[0] * k as f64;
                        let by = p[1] + c.drift[1] * k as f64;
                        a * (-((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (2.0 * c.sigma_px * c.sigma_px)).exp()
                    })
                    .sum();
                1.0 - c.strength * field.min(1.0)
            });
            let n = if s.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let v = (d.sky + disk) * attenuation + n;
            data.push(v.round().clamp(0.0, 4095.0) as f32);
            if rho > 1.0 {
                labels[i] = Class::Background.id();
            }
        }
    }
    (data, labels)
}
