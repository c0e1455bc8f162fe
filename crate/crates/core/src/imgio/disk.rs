//! Solar disk localisation by limb-point circle fitting.

use super::{DiskGeometry, FrameBuffer};
use crate::error::{Error, Result};
use crate::linalg::solve3;

const RAYS: usize = 360;
const RAY_STEP: f32 = 0.5;
const MIN_EDGE_POINTS: usize = 32;
const MAX_RMS_PX: f64 = 5.0;

fn percentile(sorted: &[f32], q: f64) -> f32 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Finds the solar disk by fitting a circle to limb points.
///
/// Along radial scanlines from the bright-pixel centroid, the outermost
/// crossing of the midpoint between the 10th and 90th intensity percentiles
/// gives a coarse limb position. With limb darkening that crossing sits well
/// inside the true limb, so each point is moved outward to the steepest
/// intensity drop nearby. An algebraic circle fit on these points is
/// followed by outlier rejection and one geometric Gauss-Newton pass.
pub fn estimate_disk(frame: &FrameBuffer) -> Result<DiskGeometry> {
    let (w, h) = (frame.width(), frame.height());
    let mut sorted = frame.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    let lo = percentile(&sorted, 0.10);
    let hi = percentile(&sorted, 0.90);
    if hi - lo <= f32::EPSILON * hi.abs().max(1.0) {
        return Err(Error::DiskNotFound("no intensity contrast".into()));
    }
    let threshold = 0.5 * (lo + hi);

    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
    for (i, &v) in frame.data().iter().enumerate() {
        if v >= threshold {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DiskNotFound("no bright pixels".into()));
    }
    let (cx, cy) = ((sx / n as f64) as f32, (sy / n as f64) as f32);

    let max_len = ((w * w + h * h) as f32).sqrt();
    let mut points = Vec::with_capacity(RAYS);
    let mut samples = Vec::new();
    for k in 0..RAYS {
        let theta = k as f32 * std::f32::consts::TAU / RAYS as f32;
        let (dy, dx) = theta.sin_cos();
        samples.clear();
        let mut t = 0.0f32;
        let mut left_frame = false;
        while t < max_len {
            let (x, y) = (cx + t * dx, cy + t * dy);
            if x < 0.0 || y < 0.0 || x > (w - 1) as f32 || y > (h - 1) as f32 {
                left_frame = true;
                break;
            }
            samples.push(frame.sample_bilinear(x, y));
            t += RAY_STEP;
        }
        // outermost above-to-below crossing
        let Some(cross) = (0..samples.len().saturating_sub(1))
            .rev()
            .find(|&i| samples[i] >= threshold && samples[i + 1] < threshold)
        else {
            continue;
        };
        // ray still on the disk when it leaves the frame
        if left_frame && samples[cross + 1..].iter().any(|&v| v >= threshold) {
            continue;
        }
        let Some(edge_t) = steepest_drop(&samples, cross) else {
            continue;
        };
        points.push(((cx + edge_t * dx) as f64, (cy + edge_t * dy) as f64));
    }
    if points.len() < MIN_EDGE_POINTS {
        return Err(Error::DiskNotFound(format!("only {} limb points", points.len())));
    }

    let (mut c, mut r) = kasa_fit(&points).ok_or_else(|| Error::DiskNotFound("degenerate limb points".into()))?;
    // reject outliers (clouds, limb flares) by median absolute deviation
    let resid: Vec<f64> = points.iter().map(|p| ((p.0 - c.0).hypot(p.1 - c.1) - r).abs()).collect();
    let mut sorted_res = resid.clone();
    sorted_res.sort_by(f64::total_cmp);
    let mad = sorted_res[sorted_res.len() / 2];
    let cut = (3.0 * 1.4826 * mad).max(1.0);
    let inliers: Vec<(f64, f64)> = points
        .iter()
        .zip(&resid)
        .filter(|(_, &d)| d <= cut)
        .map(|(p, _)| *p)
        .collect();
    if inliers.len() < MIN_EDGE_POINTS {
        return Err(Error::DiskNotFound(format!("only {} consistent limb points", inliers.len())));
    }
    if let Some((c2, r2)) = kasa_fit(&inliers) {
        c = c2;
        r = r2;
    }
    let (c, r) = geometric_step(&inliers, c, r);
    let rms = (inliers
        .iter()
        .map(|p| ((p.0 - c.0).hypot(p.1 - c.1) - r).powi(2))
        .sum::<f64>()
        / inliers.len() as f64)
        .sqrt();
    if !(rms <= MAX_RMS_PX) {
        return Err(Error::DiskNotFound(format!("fit residual RMS {rms:.2} px")));
    }
    let geom = DiskGeometry::new(c.0, c.1, r).map_err(|_| Error::DiskNotFound("invalid fit".into()))?;
    if !geom.plausible_for(w, h) || r > w.max(h) as f64 {
        return Err(Error::DiskNotFound(format!("implausible disk {geom:?}")));
    }
    Ok(geom)
}

/// Position (in pixels along the ray) of the steepest intensity decrease
/// near the coarse crossing at sample `cross`.
fn steepest_drop(samples: &[f32], cross: usize) -> Option<f32> {
    let n = samples.len();
    let radius = cross as f32 * RAY_STEP;
    let back = (3.0 / RAY_STEP) as usize;
    let fwd = ((0.2 * radius).max(4.0) / RAY_STEP) as usize;
    let lo = cross.saturating_sub(back).max(1);
    let hi = (cross + fwd).min(n.saturating_sub(2));
    if lo > hi {
        return None;
    }
    let drop = |i: usize| samples[i - 1] - samples[i + 1];
    let best = (lo..=hi).max_by(|&a, &b| drop(a).total_cmp(&drop(b)))?;
    let mut offset = 0.0;
    if best > lo && best < hi {
        let (l, c, r) = (drop(best - 1), drop(best), drop(best + 1));
        let denom = l - 2.0 * c + r;
        if denom.abs() > f32::EPSILON {
            offset = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
        }
    }
    Some((best as f32 + offset) * RAY_STEP)
}

/// Algebraic (Kåsa) circle fit: minimises Σ(x² + y² + Dx + Ey + F)².
fn kasa_fit(points: &[(f64, f64)]) -> Option<((f64, f64), f64)> {
    let (mx, my) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (mx / points.len() as f64, my / points.len() as f64);
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(x, y) in points {
        let (x, y) = (x - mx, y - my);
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * rhs;
        }
    }
    let [d, e, f] = solve3(a, b)?;
    let (cx, cy) = (-0.5 * d, -0.5 * e);
    let r2 = cx * cx + cy * cy - f;
    (r2 > 0.0).then(|| ((cx + mx, cy + my), r2.sqrt()))
}

/// One Gauss-Newton step on the geometric distances |p - c| - r.
fn geometric_step(points: &[(f64, f64)], c: (f64, f64), r: f64) -> ((f64, f64), f64) {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(x, y) in points {
        let d = (x - c.0).hypot(y - c.1);
        if d < 1e-9 {
            continue;
        }
        let jac = [-(x - c.0) / d, -(y - c.1) / d, -1.0];
        let res = d - r;
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += jac[i] * jac[j];
            }
            b[i] -= jac[i] * res;
        }
    }
    match solve3(a, b) {
        Some([dx, dy, dr]) => ((c.0 + dx, c.1 + dy), r + dr),
        None => (c, r),
    }
}
