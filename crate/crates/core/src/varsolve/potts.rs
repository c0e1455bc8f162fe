use chrono::{DateTime, Utc};

use super::simplex::{project_simplex, MAX_CLASSES};
use super::{relative_change, SolveSettings, STEP};
use crate::classmodel::ProbVolume;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::segment::LabelMap;

/// Relaxed minimal-partition problem:
/// min over per-pixel simplex vectors u of ½ Σ_k TV(u_k) + λ Σ_k ⟨u_k, c_k⟩.
#[derive(Debug, Clone, Copy)]
pub struct PottsProblem<'a> {
    pub costs: &'a ProbVolume,
    pub lambda: f64,
    pub settings: SolveSettings,
}

impl<'a> PottsProblem<'a> {
    pub fn new(costs: &'a ProbVolume, lambda: f64) -> Self {
        Self {
            costs,
            lambda,
            settings: SolveSettings::POTTS_DEFAULT,
        }
    }

    pub fn with_settings(mut self, settings: SolveSettings) -> Self {
        self.settings = settings;
        self
    }

    fn validate(&self) -> Result<()> {
        let k = self.costs.classes();
        if !(2..=MAX_CLASSES).contains(&k) {
            return Err(Error::InvalidParameter(format!("Potts class count {k}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("Potts lambda {}", self.lambda)));
        }
        self.settings.validate()
    }
}

/// Soft class assignments, pixel-major: `data[pixel * classes + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedLabeling {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f32>,
    timestamp: DateTime<Utc>,
    frame_index: usize,
}

impl RelaxedLabeling {
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

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Assignment plane of one class.
    pub fn plane(&self, k: usize) -> Vec<f32> {
        self.data.iter().skip(k).step_by(self.classes).copied().collect()
    }
}

/// Iterates kept for warm-starting the next frame.
#[derive(Debug, Clone)]
pub struct PottsState {
    width: usize,
    height: usize,
    classes: usize,
    u: Vec<f32>,
    xi: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct PottsSolution {
    pub labeling: RelaxedLabeling,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relaxed energy of the running iterate at each check.
    pub energy_trace: Vec<f64>,
    pub state: PottsState,
}

pub fn potts_relax(problem: &PottsProblem<'_>) -> Result<RelaxedLabeling> {
    potts_solve(problem, None).map(|s| s.labeling)
}

/// Relaxed energy of soft assignments `u` (pixel-major, `k` classes).
fn energy(exec: Exec, u: &[f32], costs: &[f32], w: usize, h: usize, k: usize, lambda: f32) -> f64 {
    par::sum_rows(exec, h, |y| {
        let mut acc = 0.0f64;
        for x in 0..w {
            let i = y * w + x;
            let mut tv = 0.0f32;
            let mut data = 0.0f32;
            for c in 0..k {
                let a = i * k + c;
                let gx = if x + 1 < w { u[a + k] - u[a] } else { 0.0 };
                let gy = if y + 1 < h { u[a + w * k] - u[a] } else { 0.0 };
                tv += (gx * gx + gy * gy).sqrt();
                data += u[a] * costs[a];
            }
            acc += (0.5 * tv + lambda * data) as f64;
        }
        acc
    })
}

/// Relaxed Potts energy of a soft labeling.
pub fn potts_energy(labeling: &RelaxedLabeling, costs: &ProbVolume, lambda: f64) -> Result<f64> {
    if labeling.width != costs.width() || labeling.height != costs.height() || labeling.classes != costs.classes() {
        return Err(Error::DimensionMismatch("labeling vs cost volume".into()));
    }
    Ok(energy(
        Exec::Sequential,
        &labeling.data,
        costs.data(),
        labeling.width,
        labeling.height,
        labeling.classes,
        lambda as f32,
    ))
}

/// Potts energy of a hard labeling, i.e. the relaxed energy of its one-hot
/// encoding: half the summed class-indicator perimeters plus λ times the
/// selected costs.
pub fn labeling_energy(labels: &LabelMap, costs: &ProbVolume, lambda: f64) -> Result<f64> {
    if labels.width() != costs.width() || labels.height() != costs.height() {
        return Err(Error::DimensionMismatch("label map vs cost volume".into()));
    }
    let k = costs.classes();
    let mut onehot = vec![0.0f32; labels.len() * k];
    for (i, &l) in labels.labels().iter().enumerate() {
        if l as usize >= k {
            return Err(Error::InvalidParameter(format!("label {l} with {k} classes")));
        }
        onehot[i * k + l as usize] = 1.0;
    }
    Ok(energy(Exec::Sequential, &onehot, costs.data(), labels.width(), labels.height(), k, lambda as f32))
}

/// Dual ascent with projection onto balls of radius ½. The x part vanishes
/// on the last column and the y part on the last row.
fn dual_step(exec: Exec, ubar: &[f32], xi: &mut [f32], w: usize, h: usize, k: usize) {
    let wk = w * k;
    par::rows_mut(exec, xi, wk * 2, |y, row| {
        let cur = &ubar[y * wk..(y + 1) * wk];
        let below = if y + 1 < h { &ubar[(y + 1) * wk..(y + 2) * wk] } else { cur };
        let inner = (w - 1) * k;
        for j in 0..wk {
            let gx = if j < inner { cur[j + k] - cur[j] } else { 0.0 };
            let qx = row[2 * j] + STEP * gx;
            let qy = row[2 * j + 1] + STEP * (below[j] - cur[j]);
            let scale = 0.5 / (qx * qx + qy * qy).sqrt().max(0.5);
            row[2 * j] = if j < inner { qx * scale } else { 0.0 };
            row[2 * j + 1] = if y + 1 < h { qy * scale } else { 0.0 };
        }
    });
}

/// Primal descent on the data term followed by the per-pixel simplex
/// projection and over-relaxation.
#[allow(clippy::too_many_arguments)]
fn primal_step(
    exec: Exec,
    c: &[f32],
    xi: &[f32],
    u: &mut [f32],
    ubar: &mut [f32],
    w: usize,
    k: usize,
    tau_lambda: f32,
    zeros: &[f32],
) {
    let wk = w * k;
    par::rows2_mut(exec, u, ubar, wk, |y, ru, rub| {
        let cur = &xi[y * wk * 2..(y + 1) * wk * 2];
        let above = if y > 0 { &xi[(y - 1) * wk * 2..y * wk * 2] } else { zeros };
        let rc = &c[y * wk..(y + 1) * wk];
        let mut v = [0.0f32; MAX_CLASSES];
        for x in 0..w {
            let base = x * k;
            for cl in 0..k {
                let j = base + cl;
                let left = if x > 0 { cur[2 * (j - k)] } else { 0.0 };
                let div = cur[2 * j] - left + cur[2 * j + 1] - above[2 * j + 1];
                v[cl] = ru[j] + STEP * div - tau_lambda * rc[j];
            }
            project_simplex(&mut v[..k]);
            for cl in 0..k {
                let j = base + cl;
                let old = ru[j];
                ru[j] = v[cl];
                rub[j] = 2.0 * v[cl] - old;
            }
        }
    });
}

/// Primal-dual iterations for the relaxed Potts model with per-class dual
/// balls of radius ½ and a per-pixel simplex projection.
///
/// Cold starts initialise with the pointwise argmin labeling. The returned
/// labeling is the lowest-energy iterate among the checks.
pub fn potts_solve(problem: &PottsProblem<'_>, warm: Option<&PottsState>) -> Result<PottsSolution> {
    problem.validate()?;
    let costs = problem.costs;
    let (w, h, k) = (costs.width(), costs.height(), costs.classes());
    let c = costs.data();
    let n = w * h;
    let lambda = problem.lambda as f32;
    let settings = problem.settings;
    let exec = settings.exec;

    let warm = warm.filter(|s| s.width == w && s.height == h && s.classes == k);
    let (mut u, mut xi) = match warm {
        Some(s) => (s.u.clone(), s.xi.clone()),
        None => {
            let mut u = vec![0.0f32; n * k];
            for i in 0..n {
                let px = &c[i * k..(i + 1) * k];
                let best = argmin(px);
                u[i * k + best] = 1.0;
            }
            (u, vec![0.0f32; n * k * 2])
        }
    };
    let mut ubar = u.clone();
    let zeros = vec![0.0f32; w * k * 2];

    let mut best_energy = energy(exec, &u, c, w, h, k, lambda);
    let mut best = u.clone();
    let mut prev = best_energy;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let tau_lambda = STEP * lambda;

    for it in 1..=settings.max_iters {
        iterations = it;
        dual_step(exec, &ubar, &mut xi, w, h, k);
        primal_step(exec, c, &xi, &mut u, &mut ubar, w, k, tau_lambda, &zeros);
        if it % settings.check_interval == 0 || it == settings.max_iters {
            let e = energy(exec, &u, c, w, h, k, lambda);
            if !e.is_finite() {
                return Err(Error::NonFinite(it));
            }
            trace.push(e);
            if e < best_energy {
                best_energy = e;
                best.copy_from_slice(&u);
            }
            if relative_change(prev, e) < settings.tol {
                converged = true;
                break;
            }
            prev = e;
        }
    }

    Ok(PottsSolution {
        labeling: RelaxedLabeling {
            width: w,
            height: h,
            classes: k,
            data: best,
            timestamp: costs.timestamp(),
            frame_index: costs.frame_index(),
        },
        energy: best_energy,
        iterations,
        converged,
        energy_trace: trace,
        state: PottsState {
            width: w,
            height: h,
            classes: k,
            u,
            xi,
        },
    })
}

fn argmin(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Pointwise argmax of the relaxed assignment; ties go to the lowest class.
pub fn round_labeling(relaxed: &RelaxedLabeling) -> LabelMap {
    let k = relaxed.classes;
    let labels = relaxed
        .data
        .chunks_exact(k)
        .map(|px| {
            let mut best = 0;
            for (i, &x) in px.iter().enumerate().skip(1) {
                if x > px[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(relaxed.width, relaxed.height, k, labels, relaxed.timestamp, relaxed.frame_index)
        .expect("argmax labels are in range")
}

#[cfg(test)]
impl RelaxedLabeling {
    pub(crate) fn from_raw(width: usize, height: usize, classes: usize, data: Vec<f32>) -> Self {
        Self {
            width,
            height,
            classes,
            data,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            frame_index: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(w: usize, h: usize, planes: &[Vec<f32>]) -> ProbVolume {
        ProbVolume::from_planes(w, h, planes, DateTime::<Utc>::UNIX_EPOCH, 0).unwrap()
    }

    fn brute_force_min(costs: &ProbVolume, lambda: f64) -> f64 {
        let (w, h, k) = (costs.width(), costs.height(), costs.classes());
        let n = w * h;
        let total = k.pow(n as u32);
        let mut best = f64::INFINITY;
        for code in 0..total {
            let mut c = code;
            let labels: Vec<u8> = (0..n)
                .map(|_| {
                    let l = c % k;
                    c /= k;
                    l as u8
                })
                .collect();
            let map = LabelMap::new(w, h, k, labels, DateTime::<Utc>::UNIX_EPOCH, 0).unwrap();
            best = best.min(labeling_energy(&map, costs, lambda).unwrap());
        }
        best
    }

    #[test]
    fn uniform_dominant_class_wins() {
        let v = volume(6, 5, &[vec![0.0; 30], vec![1.0; 30]]);
        let r = potts_relax(&PottsProblem::new(&v, 0.7)).unwrap();
        assert!(r.plane(0).iter().all(|&a| a >= 0.99));
    }

    #[test]
    fn simplex_constraint_holds() {
        let mut s = 3u32;
        let mut rnd = || {
            s = s.wrapping_mul(1664525).wrapping_add(1013904223);
            (s >> 8) as f32 / (1 << 24) as f32 * 4.0
        };
        let planes: Vec<Vec<f32>> = (0..3).map(|_| (0..64).map(|_| rnd()).collect()).collect();
        let v = volume(8, 8, &planes);
        let r = potts_relax(&PottsProblem::new(&v, 0.5)).unwrap();
        for i in 0..64 {
            let px = r.pixel(i);
            assert!((px.iter().sum::<f32>() - 1.0).abs() < 1e-4);
            assert!(px.iter().all(|&a| (-1e-6..=1.0 + 1e-6).contains(&a)));
        }
    }

    #[test]
    fn three_by_three_instances_match_brute_force() {
        let mut s = 11u32;
        let mut rnd = || {
            s = s.wrapping_mul(1664525).wrapping_add(1013904223);
            ((s >> 16) % 4) as f32
        };
        for _ in 0..20 {
            let planes: Vec<Vec<f32>> = (0..2).map(|_| (0..9).map(|_| rnd()).collect()).collect();
            let v = volume(3, 3, &planes);
            let r = potts_relax(&PottsProblem::new(&v, 1.0)).unwrap();
            let e = labeling_energy(&round_labeling(&r), &v, 1.0).unwrap();
            let opt = brute_force_min(&v, 1.0);
            assert!(e <= opt * 1.05 + 1e-9, "rounded {e} vs optimum {opt}");
        }
    }

    #[test]
    fn strong_regulariser_picks_cheaper_uniform_labeling() {
        // checkerboard favouring alternating classes, class 1 slightly cheaper overall
        let (w, h) = (8, 8);
        let mut p0 = vec![0.0f32; 64];
        let mut p1 = vec![0.0f32; 64];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if (x + y) % 2 == 0 {
                    p0[i] = 0.0;
                    p1[i] = 1.0;
                } else {
                    p0[i] = 1.2;
                    p1[i] = 0.0;
                }
            }
        }
        let v = volume(w, h, &[p0.clone(), p1.clone()]);
        let lambda = 0.05;
        let r = potts_relax(&PottsProblem::new(&v, lambda)).unwrap();
        let labels = round_labeling(&r);
        let (e0, e1): (f32, f32) = (p0.iter().sum(), p1.iter().sum());
        let expected = if e0 < e1 { 0 } else { 1 };
        assert!(labels.labels().iter().all(|&l| l == expected), "{:?}", labels.labels());
    }

    #[test]
    fn large_margin_gives_pointwise_argmin() {
        let (w, h) = (10, 7);
        let mut p0 = vec![0.0f32; w * h];
        let mut p1 = vec![0.0f32; w * h];
        for i in 0..w * h {
            if (i * 7919) % 3 == 0 {
                p0[i] = 5.0;
            } else {
                p1[i] = 5.0;
            }
        }
        // cost gap 5 > 2 / lambda_reg with lambda = 1
        let v = volume(w, h, &[p0.clone(), p1]);
        let labels = round_labeling(&potts_relax(&PottsProblem::new(&v, 1.0)).unwrap());
        for (i, &l) in labels.labels().iter().enumerate() {
            assert_eq!(l, if p0[i] > 0.0 { 1 } else { 0 });
        }
    }

    #[test]
    fn rounding_rules() {
        let r = RelaxedLabeling::from_raw(3, 1, 2, vec![0.7, 0.3, 0.5, 0.5, 0.0, 1.0]);
        assert_eq!(round_labeling(&r).labels(), &[0, 0, 1]);
    }
}
