use super::{relative_change, SolveSettings, STEP};
use crate::error::{Error, Result};
use crate::imgio::FrameBuffer;
use crate::par::{self, Exec};

/// TV-L1 denoising problem: min_u TV(u) + λ Σ|u − f|.
#[derive(Debug, Clone, Copy)]
pub struct Tvl1Problem<'a> {
    pub observation: &'a FrameBuffer,
    pub lambda: f64,
    pub settings: SolveSettings,
}

impl<'a> Tvl1Problem<'a> {
    pub fn new(observation: &'a FrameBuffer, lambda: f64) -> Self {
        Self {
            observation,
            lambda,
            settings: SolveSettings::TVL1_DEFAULT,
        }
    }

    pub fn with_settings(mut self, settings: SolveSettings) -> Self {
        self.settings = settings;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("TV-L1 lambda {}", self.lambda)));
        }
        self.settings.validate()
    }
}

/// Primal and dual iterates, reusable as a warm start for a similar frame.
#[derive(Debug, Clone)]
pub struct Tvl1State {
    width: usize,
    height: usize,
    u: Vec<f32>,
    px: Vec<f32>,
    py: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Tvl1Solution {
    pub frame: FrameBuffer,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy of the running iterate at each check.
    pub energy_trace: Vec<f64>,
    pub state: Tvl1State,
}

/// Solves the TV-L1 model from a cold start.
pub fn tvl1_denoise(problem: &Tvl1Problem<'_>) -> Result<FrameBuffer> {
    tvl1_solve(problem, None).map(|s| s.frame)
}

/// Discrete TV-L1 energy Σ|∇u|₂ + λ Σ|u − f| with the solver's gradient.
pub fn tvl1_energy(u: &FrameBuffer, f: &FrameBuffer, lambda: f64) -> Result<f64> {
    u.check_shape(f)?;
    Ok(energy(Exec::Sequential, u.data(), f.data(), u.width(), u.height(), lambda as f32))
}

fn energy(exec: Exec, u: &[f32], f: &[f32], w: usize, h: usize, lambda: f32) -> f64 {
    par::sum_rows(exec, h, |y| {
        let row = y * w;
        let mut acc = 0.0f64;
        for x in 0..w {
            let i = row + x;
            let gx = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            let gy = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
            acc += ((gx * gx + gy * gy).sqrt() + lambda * (u[i] - f[i]).abs()) as f64;
        }
        acc
    })
}

/// Dual ascent and projection onto the unit ball. The dual field vanishes
/// on the last column (x part) and last row (y part), which encodes the
/// Neumann boundary of the forward-difference gradient.
fn dual_step(exec: Exec, ubar: &[f32], px: &mut [f32], py: &mut [f32], w: usize, h: usize) {
    par::rows2_mut(exec, px, py, w, |y, rpx, rpy| {
        let row = &ubar[y * w..(y + 1) * w];
        let below = if y + 1 < h { &ubar[(y + 1) * w..(y + 2) * w] } else { row };
        let n = w - 1;
        for x in 0..n {
            let qx = rpx[x] + STEP * (row[x + 1] - row[x]);
            let qy = rpy[x] + STEP * (below[x] - row[x]);
            let inv = 1.0 / (qx * qx + qy * qy).sqrt().max(1.0);
            rpx[x] = qx * inv;
            rpy[x] = qy * inv;
        }
        let qy = rpy[n] + STEP * (below[n] - row[n]);
        rpx[n] = 0.0;
        rpy[n] = qy / qy.abs().max(1.0);
        if y + 1 == h {
            rpy.fill(0.0);
        }
    });
}

/// Primal descent with the L1 proximal step and over-relaxation.
#[allow(clippy::too_many_arguments)]
fn primal_step(
    exec: Exec,
    f: &[f32],
    px: &[f32],
    py: &[f32],
    u: &mut [f32],
    ubar: &mut [f32],
    w: usize,
    shrink: f32,
    zeros: &[f32],
) {
    par::rows2_mut(exec, u, ubar, w, |y, ru, rub| {
        let row = y * w;
        let (rpx, rpy, rf) = (&px[row..row + w], &py[row..row + w], &f[row..row + w]);
        let above = if y > 0 { &py[row - w..row] } else { zeros };
        let mut update = |x: usize, div: f32| {
            let old = ru[x];
            let d = old + STEP * div - rf[x];
            let new = rf[x] + d - d.clamp(-shrink, shrink);
            ru[x] = new;
            rub[x] = 2.0 * new - old;
        };
        update(0, rpx[0] + rpy[0] - above[0]);
        for x in 1..w {
            update(x, rpx[x] - rpx[x - 1] + rpy[x] - above[x]);
        }
    });
}

/// Chambolle–Pock iterations for TV-L1, optionally warm-started.
///
/// The returned frame is the lowest-energy iterate among the checks
/// (including the observation itself), so its energy never exceeds that of
/// the observation.
pub fn tvl1_solve(problem: &Tvl1Problem<'_>, warm: Option<&Tvl1State>) -> Result<Tvl1Solution> {
    problem.validate()?;
    let f = problem.observation.data();
    let (w, h) = (problem.observation.width(), problem.observation.height());
    let n = w * h;
    let lambda = problem.lambda as f32;
    let settings = problem.settings;
    let exec = settings.exec;

    let warm = warm.filter(|s| s.width == w && s.height == h);
    let (mut u, mut px, mut py) = match warm {
        Some(s) => (s.u.clone(), s.px.clone(), s.py.clone()),
        None => (f.to_vec(), vec![0.0; n], vec![0.0; n]),
    };
    let mut ubar = u.clone();
    let zeros = vec![0.0f32; w];

    let e_obs = energy(exec, f, f, w, h, lambda);
    let mut best: Option<Vec<f32>> = None;
    let mut best_energy = e_obs;
    let mut prev_energy = if warm.is_some() {
        let e = energy(exec, &u, f, w, h, lambda);
        if e < best_energy {
            best_energy = e;
            best = Some(u.clone());
        }
        e
    } else {
        e_obs
    };

    let shrink = STEP * lambda;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=settings.max_iters {
        iterations = it;
        dual_step(exec, &ubar, &mut px, &mut py, w, h);
        primal_step(exec, f, &px, &py, &mut u, &mut ubar, w, shrink, &zeros);
        if it % settings.check_interval == 0 || it == settings.max_iters {
            let e = energy(exec, &u, f, w, h, lambda);
            if !e.is_finite() {
                return Err(Error::NonFinite(it));
            }
            trace.push(e);
            if e < best_energy {
                best_energy = e;
                best = Some(u.clone());
            }
            if relative_change(prev_energy, e) < settings.tol {
                converged = true;
                break;
            }
            prev_energy = e;
        }
    }

    let out = best.unwrap_or_else(|| f.to_vec());
    let frame = problem.observation.with_data(out).map_err(|_| Error::NonFinite(iterations))?;
    Ok(Tvl1Solution {
        frame,
        energy: best_energy,
        iterations,
        converged,
        energy_trace: trace,
        state: Tvl1State {
            width: w,
            height: h,
            u,
            px,
            py,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn frame(w: usize, h: usize, data: Vec<f32>) -> FrameBuffer {
        FrameBuffer::new(w, h, data, Utc::now(), 0).unwrap()
    }

    pub(crate) fn disk(size: usize, r: f32, contrast: f32) -> FrameBuffer {
        let c = (size as f32 - 1.0) / 2.0;
        let data = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f32 - c, (i / size) as f32 - c);
                if (x * x + y * y).sqrt() <= r {
                    contrast
                } else {
                    0.0
                }
            })
            .collect();
        frame(size, size, data)
    }

    #[test]
    fn constant_frame_is_a_fixed_point() {
        let f = frame(17, 9, vec![3.25; 153]);
        for lambda in [0.0, 0.1, 5.0] {
            let u = tvl1_denoise(&Tvl1Problem::new(&f, lambda)).unwrap();
            assert!(u.data().iter().all(|&v| v == 3.25));
        }
    }

    #[test]
    fn energy_hand_values() {
        let u = frame(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(tvl1_energy(&u, &u, 0.7).unwrap(), 2.0);
        let c = frame(2, 2, vec![4.0; 4]);
        assert_eq!(tvl1_energy(&c, &c, 3.0).unwrap(), 0.0);
        let f = frame(2, 2, vec![1.0; 4]);
        let g = frame(2, 2, vec![2.0; 4]);
        assert_eq!(tvl1_energy(&g, &f, 0.5).unwrap(), 2.0);
        assert!(matches!(tvl1_energy(&frame(1, 4, vec![0.0; 4]), &f, 1.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn small_lambda_removes_radius_ten_disk() {
        let f = disk(48, 10.0, 1.0);
        let u = tvl1_denoise(&Tvl1Problem::new(&f, 0.1)).unwrap();
        let c = 24usize;
        let mut worst = 0.0f32;
        for y in c - 9..=c + 9 {
            for x in c - 9..=c + 9 {
                if f.get(x, y) > 0.5 {
                    worst = worst.max(u.get(x, y).abs());
                }
            }
        }
        assert!(worst < 0.05, "residual {worst}");
    }

    #[test]
    fn large_lambda_keeps_radius_ten_disk() {
        let f = disk(48, 10.0, 1.0);
        let u = tvl1_denoise(&Tvl1Problem::new(&f, 0.9)).unwrap();
        assert!(u.get(24, 24) >= 0.9, "center {}", u.get(24, 24));
    }

    #[test]
    fn energy_never_exceeds_observation() {
        let mut s = 7u32;
        let data: Vec<f32> = (0..40 * 30)
            .map(|_| {
                s = s.wrapping_mul(1664525).wrapping_add(1013904223);
                (s >> 8) as f32 / (1 << 24) as f32
            })
            .collect();
        let f = frame(40, 30, data);
        for lambda in [0.05, 0.5, 2.0] {
            let p = Tvl1Problem::new(&f, lambda);
            let sol = tvl1_solve(&p, None).unwrap();
            let e = tvl1_energy(&sol.frame, &f, lambda).unwrap();
            assert!(e <= tvl1_energy(&f, &f, lambda).unwrap() + 1e-9);
            assert!((e - sol.energy).abs() < 1e-6 * e.max(1.0));
        }
    }

    #[test]
    fn warm_start_converges_quickly_and_agrees() {
        let f = disk(64, 12.0, 1.0);
        let p = Tvl1Problem::new(&f, 0.5);
        let cold = tvl1_solve(&p, None).unwrap();
        let warm = tvl1_solve(&p, Some(&cold.state)).unwrap();
        assert!(warm.iterations <= 100);
        let diff = cold
            .frame
            .data()
            .iter()
            .zip(warm.frame.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(diff < 1e-2, "{diff}");
    }

    #[test]
    fn sequential_and_parallel_are_bit_identical() {
        let f = disk(40, 7.0, 2.0);
        let run = |exec| {
            let p = Tvl1Problem::new(&f, 0.3).with_settings(SolveSettings::TVL1_DEFAULT.with_exec(exec));
            tvl1_solve(&p, None).unwrap()
        };
        let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
        assert_eq!(a.frame.data(), b.frame.data());
        assert_eq!(a.iterations, b.iterations);
    }
}
