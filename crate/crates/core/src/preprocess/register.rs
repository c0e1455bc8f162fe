use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{bilinear, FrameBuffer};
use crate::linalg::sym2_eigenvalues;
use crate::par::{self, Exec};

pub const DEFAULT_PYRAMID_LEVELS: usize = 5;
const WARP_ITERS: usize = 3;
const MAX_CONDITION: f64 = 1e8;
const MIN_LEVEL_SIZE: usize = 16;
const MARGIN: usize = 2;

/// Translation in pixels. [`apply_shift`] moves image content by `(u1, u2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisplacementVector {
    pub u1: f64,
    pub u2: f64,
}

impl DisplacementVector {
    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn norm(&self) -> f64 {
        self.u1.hypot(self.u2)
    }
}

/// Resamples `frame` so that its content moves by `d`; samples outside the
/// frame replicate the border.
pub fn apply_shift(frame: &FrameBuffer, d: DisplacementVector) -> FrameBuffer {
    apply_shift_with(frame, d, Exec::default())
}

pub(crate) fn apply_shift_with(frame: &FrameBuffer, d: DisplacementVector, exec: Exec) -> FrameBuffer {
    if d.u1 == 0.0 && d.u2 == 0.0 {
        return frame.clone();
    }
    let data = shift_raw(frame.data(), frame.width(), frame.height(), d.u1 as f32, d.u2 as f32, exec);
    frame.with_data(data).expect("bilinear resampling of finite data is finite")
}

fn shift_raw(src: &[f32], w: usize, h: usize, dx: f32, dy: f32, exec: Exec) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    par::rows_mut(exec, &mut out, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = bilinear(src, w, h, x as f32 - dx, y as f32 - dy);
        }
    });
    out
}

/// Displacement `d` such that `apply_shift(moving, d)` aligns with
/// `reference`, from Lucas–Kanade steps on gradient-magnitude images over a
/// Gaussian pyramid.
pub fn register_translation(reference: &FrameBuffer, moving: &FrameBuffer, levels: usize) -> Result<DisplacementVector> {
    register_translation_with(reference, moving, levels, Exec::default())
}

pub fn register_translation_with(
    reference: &FrameBuffer,
    moving: &FrameBuffer,
    levels: usize,
    exec: Exec,
) -> Result<DisplacementVector> {
    reference.check_shape(moving)?;
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    let (w, h) = (reference.width(), reference.height());
    let f_pyr = pyramid(grad_mag(reference.data(), w, h, exec), w, h, levels, exec);
    let g_pyr = pyramid(grad_mag(moving.data(), w, h, exec), w, h, levels, exec);
    let mut d = [0.0f64; 2];
    for lvl in (0..f_pyr.len()).rev() {
        let (ref fl, lw, lh) = f_pyr[lvl];
        let (ref gl, _, _) = g_pyr[lvl];
        if lvl + 1 < f_pyr.len() {
            d = [d[0] * 2.0, d[1] * 2.0];
        }
        let (fx, fy) = central_grad(fl, lw, lh);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for y in MARGIN..lh.saturating_sub(MARGIN) {
            for x in MARGIN..lw.saturating_sub(MARGIN) {
                let i = y * lw + x;
                let (gx, gy) = (fx[i] as f64, fy[i] as f64);
                a += gx * gx;
                b += gx * gy;
                c += gy * gy;
            }
        }
        let (lo, hi) = sym2_eigenvalues(a, b, c);
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(Error::SingularStructureTensor(cond));
        }
        let det = a * c - b * b;
        for _ in 0..WARP_ITERS {
            let warped = shift_raw(gl, lw, lh, d[0] as f32, d[1] as f32, exec);
            let (mut r0, mut r1) = (0.0, 0.0);
            for y in MARGIN..lh.saturating_sub(MARGIN) {
                for x in MARGIN..lw.saturating_sub(MARGIN) {
                    let i = y * lw + x;
                    let diff = (fl[i] - warped[i]) as f64;
                    r0 += fx[i] as f64 * diff;
                    r1 += fy[i] as f64 * diff;
                }
            }
            let vx = (c * r0 - b * r1) / det;
            let vy = (a * r1 - b * r0) / det;
            d[0] -= vx;
            d[1] -= vy;
        }
    }
    let out = DisplacementVector::new(d[0], d[1]);
    if !out.u1.is_finite() || !out.u2.is_finite() || out.norm() >= w as f64 {
        return Err(Error::SingularStructureTensor(f64::INFINITY));
    }
    Ok(out)
}

fn grad_mag(src: &[f32], w: usize, h: usize, exec: Exec) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    par::rows_mut(exec, &mut out, w, |y, row| {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for (x, v) in row.iter_mut().enumerate() {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let gx = 0.5 * (src[y * w + right] - src[y * w + left]);
            let gy = 0.5 * (src[down * w + x] - src[up * w + x]);
            *v = (gx * gx + gy * gy).sqrt();
        }
    });
    out
}

fn central_grad(src: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            gx[y * w + x] = 0.5 * (src[y * w + right] - src[y * w + left]);
            gy[y * w + x] = 0.5 * (src[down * w + x] - src[up * w + x]);
        }
    }
    (gx, gy)
}

const KERNEL: [f32; 5] = [0.054_488_685, 0.244_201_34, 0.402_619_95, 0.244_201_34, 0.054_488_685];

/// Gaussian pyramid, finest level first; stops early when a level would
/// drop below the minimum size.
fn pyramid(base: Vec<f32>, w: usize, h: usize, levels: usize, exec: Exec) -> Vec<(Vec<f32>, usize, usize)> {
    let mut out = vec![(base, w, h)];
    while out.len() < levels {
        let (ref src, sw, sh) = *out.last().expect("non-empty");
        let (nw, nh) = (sw / 2, sh / 2);
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE {
            break;
        }
        let blurred = blur(src, sw, sh, exec);
        let mut next = vec![0.0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                next[y * nw + x] = blurred[2 * y * sw + 2 * x];
            }
        }
        out.push((next, nw, nh));
    }
    out
}

fn blur(src: &[f32], w: usize, h: usize, exec: Exec) -> Vec<f32> {
    let mut tmp = vec![0.0f32; w * h];
    par::rows_mut(exec, &mut tmp, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = (0..5)
                .map(|k| {
                    let xx = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                    KERNEL[k] * src[y * w + xx]
                })
                .sum();
        }
    });
    let mut out = vec![0.0f32; w * h];
    par::rows_mut(exec, &mut out, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = (0..5)
                .map(|k| {
                    let yy = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                    KERNEL[k] * tmp[yy * w + x]
                })
                .sum();
        }
    });
    out
}
