use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureSample;
use crate::error::{Error, Result};
use crate::linalg::sym2_eigenvalues;

/// Upper clamp for negative log-likelihoods.
pub const NLL_MAX: f64 = 50.0;

const COV_FLOOR: f64 = 1e-6;
const MAX_ITERS: usize = 500;
const REL_TOL: f64 = 1e-6;
const FLOOR_STREAK: usize = 10;
const RESTARTS: u64 = 5;
const FORMAT: &str = "halpha-gmm";
const VERSION: u32 = 1;

/// Gaussian mixture over the 2-D feature space. Covariances are stored as
/// `[xx, xy, yy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<[f64; 3]>,
}

impl Mixture {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn validate(&self, class: usize) -> Result<()> {
        let m = self.weights.len();
        if m == 0 || self.means.len() != m || self.covariances.len() != m {
            return Err(Error::InvalidParameter(format!("class {class}: inconsistent mixture sizes")));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("class {class}: weights must be nonnegative and sum to 1")));
        }
        for (j, c) in self.covariances.iter().enumerate() {
            let (lo, _) = sym2_eigenvalues(c[0], c[1], c[2]);
            if !(lo >= COV_FLOOR * (1.0 - 1e-9)) || self.means[j].iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateComponent { class, component: j });
            }
        }
        Ok(())
    }

    /// Evaluates `log Σ w N(x)` by log-sum-exp.
    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        let mut terms = [0.0f64; 16];
        let mut buf = Vec::new();
        let t: &mut [f64] = if self.components() <= 16 {
            &mut terms[..self.components()]
        } else {
            buf.resize(self.components(), 0.0);
            &mut buf
        };
        for (j, slot) in t.iter_mut().enumerate() {
            *slot = self.weights[j].ln() + log_normal(x, self.means[j], self.covariances[j]);
        }
        log_sum_exp(t)
    }
}

fn log_normal(x: [f64; 2], mu: [f64; 2], c: [f64; 3]) -> f64 {
    let det = c[0] * c[2] - c[1] * c[1];
    let dx = x[0] - mu[0];
    let dy = x[1] - mu[1];
    let maha = (c[2] * dx * dx - 2.0 * c[1] * dx * dy + c[0] * dy * dy) / det;
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * maha
}

fn log_sum_exp(t: &[f64]) -> f64 {
    let m = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + t.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-class mixtures over z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    format: String,
    version: u32,
    feature_mean: [f64; 2],
    feature_std: [f64; 2],
    classes: Vec<Mixture>,
    #[serde(skip)]
    nll_offset: f64,
}

impl GmmModel {
    /// Builds a model from mixtures expressed in standardized feature space.
    pub fn from_parts(feature_mean: [f64; 2], feature_std: [f64; 2], classes: Vec<Mixture>) -> Result<Self> {
        if feature_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || feature_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("feature standardization must be finite with positive scale".into()));
        }
        if classes.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one class".into()));
        }
        for (k, m) in classes.iter().enumerate() {
            m.validate(k)?;
        }
        let mut model = GmmModel {
            format: FORMAT.into(),
            version: VERSION,
            feature_mean,
            feature_std,
            classes,
            nll_offset: 0.0,
        };
        model.nll_offset = model.compute_offset();
        Ok(model)
    }

    /// Shift making the clamped NLL nonnegative: the smallest achievable
    /// raw NLL is bounded by the sharpest component peak.
    fn compute_offset(&self) -> f64 {
        let log_scale = (self.feature_std[0] * self.feature_std[1]).ln();
        let mut lowest = f64::INFINITY;
        for m in &self.classes {
            for c in &m.covariances {
                let det = c[0] * c[2] - c[1] * c[1];
                lowest = lowest.min((2.0 * PI).ln() + 0.5 * det.ln() + log_scale);
            }
        }
        lowest.min(0.0)
    }

    pub fn classes(&self) -> usize {
        self.classes.len()
    }

    pub fn components(&self) -> usize {
        self.classes.iter().map(Mixture::components).max().unwrap_or(0)
    }

    pub fn mixture(&self, class: usize) -> &Mixture {
        &self.classes[class]
    }

    pub fn feature_mean(&self) -> [f64; 2] {
        self.feature_mean
    }

    pub fn feature_std(&self) -> [f64; 2] {
        self.feature_std
    }

    /// Constant subtracted from raw NLLs before clamping (≤ 0).
    pub fn nll_offset(&self) -> f64 {
        self.nll_offset
    }

    /// Mean and covariance of component `j` of `class` in raw feature units.
    pub fn raw_component(&self, class: usize, j: usize) -> ([f64; 2], [f64; 3]) {
        let m = &self.classes[class];
        let [s0, s1] = self.feature_std;
        let mu = [
            self.feature_mean[0] + s0 * m.means[j][0],
            self.feature_mean[1] + s1 * m.means[j][1],
        ];
        let c = m.covariances[j];
        (mu, [c[0] * s0 * s0, c[1] * s0 * s1, c[2] * s1 * s1])
    }

    #[inline]
    pub(crate) fn standardize(&self, f: [f64; 2]) -> [f64; 2] {
        [
            (f[0] - self.feature_mean[0]) / self.feature_std[0],
            (f[1] - self.feature_mean[1]) / self.feature_std[1],
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GmmModel = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model: {e}")))?;
        if raw.format != FORMAT || raw.version != VERSION {
            return Err(Error::Parse(format!("unsupported model format {} v{}", raw.format, raw.version)));
        }
        GmmModel::from_parts(raw.feature_mean, raw.feature_std, raw.classes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GmmModel::from_json(&text)
    }
}

/// Negative log-likelihood of a raw feature under the mixture of `class`,
/// clamped to `[0, NLL_MAX]`.
pub fn gmm_nll(model: &GmmModel, class: usize, feature: [f64; 2]) -> f64 {
    let z = model.standardize(feature);
    let log_scale = (model.feature_std[0] * model.feature_std[1]).ln();
    let nll = -model.classes[class].log_density(z) + log_scale - model.nll_offset;
    if nll.is_nan() {
        NLL_MAX
    } else {
        nll.clamp(0.0, NLL_MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmConfig {
    pub classes: usize,
    pub components: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            classes: super::NUM_CLASSES,
            components: 3,
            seed: 0,
        }
    }
}

/// Result of fitting a single mixture.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub mixture: Mixture,
    /// Total log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub traces: Vec<Vec<f64>>,
    pub sample_counts: Vec<usize>,
}

impl GmmFit {
    pub fn final_log_likelihood(&self, class: usize) -> f64 {
        self.traces[class].last().copied().unwrap_or(f64::NAN)
    }
}

/// Fits one mixture per class on z-scored features.
pub fn fit_gmm_em(samples: &[FeatureSample], cfg: &EmConfig) -> Result<GmmFit> {
    if cfg.components == 0 || cfg.classes == 0 {
        return Err(Error::InvalidParameter("classes and components must be positive".into()));
    }
    let mut per_class: Vec<Vec<[f64; 2]>> = vec![Vec::new(); cfg.classes];
    for s in samples {
        let k = s.label as usize;
        if k >= cfg.classes || !(s.radial >= 0.0) || !s.intensity.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid sample {s:?}")));
        }
        per_class[k].push(s.features());
    }
    let required = 10 * cfg.components;
    for (class, pts) in per_class.iter().enumerate() {
        if pts.len() < required {
            return Err(Error::InsufficientSamples {
                class,
                count: pts.len(),
                required,
            });
        }
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 2];
    for s in samples {
        mean[0] += s.intensity;
        mean[1] += s.radial;
    }
    mean = [mean[0] / n, mean[1] / n];
    let mut var = [0.0; 2];
    for s in samples {
        var[0] += (s.intensity - mean[0]).powi(2);
        var[1] += (s.radial - mean[1]).powi(2);
    }
    let std = var.map(|v| {
        let s = (v / n).sqrt();
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    let mut mixtures = Vec::with_capacity(cfg.classes);
    let mut traces = Vec::with_capacity(cfg.classes);
    let mut counts = Vec::with_capacity(cfg.classes);
    for (class, pts) in per_class.iter().enumerate() {
        let z: Vec<[f64; 2]> = pts
            .iter()
            .map(|p| [(p[0] - mean[0]) / std[0], (p[1] - mean[1]) / std[1]])
            .collect();
        let base = cfg.seed.wrapping_add((class as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
        let mut attempt = 0u64;
        let fit = loop {
            match fit_mixture(&z, cfg.components, base.wrapping_add(attempt.wrapping_mul(0x9e37_79b9))) {
                Ok(fit) => break fit,
                Err(Error::DegenerateComponent { component, .. }) => {
                    attempt += 1;
                    if attempt == RESTARTS {
                        return Err(Error::DegenerateComponent { class, component });
                    }
                    log::debug!("class {class}: component {component} collapsed, reseeding");
                }
                Err(other) => return Err(other),
            }
        };
        log::debug!(
            "class {class}: {} samples, {} EM iterations, ll {:.6}",
            pts.len(),
            fit.log_likelihood.len(),
            fit.log_likelihood.last().copied().unwrap_or(f64::NAN)
        );
        counts.push(pts.len());
        traces.push(fit.log_likelihood);
        mixtures.push(fit.mixture);
    }
    Ok(GmmFit {
        model: GmmModel::from_parts(mean, std, mixtures)?,
        traces,
        sample_counts: counts,
    })
}

/// EM for a full-covariance mixture on raw points, initialized by seeded
/// k-means++ seeding followed by hard assignment.
pub fn fit_mixture(points: &[[f64; 2]], components: usize, seed: u64) -> Result<MixtureFit> {
    let m = components;
    if m == 0 || points.len() < 10 * m {
        return Err(Error::InsufficientSamples {
            class: 0,
            count: points.len(),
            required: 10 * m.max(1),
        });
    }
    let n = points.len();
    let mut mix = init_kmeanspp(points, m, seed);
    let mut streak = vec![0usize; m];
    let mut trace: Vec<f64> = Vec::new();
    let mut resp = vec![0.0f64; n * m];
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let ll = e_step(points, &mix, &mut resp);
        if let Some(&prev) = trace.last() {
            let slack = 1e-9 * prev.abs().max(1.0);
            debug_assert!(ll >= prev - slack, "EM log-likelihood decreased: {prev} -> {ll}");
            if ll < prev - slack {
                log::warn!("EM log-likelihood decreased: {prev} -> {ll}");
            }
            trace.push(ll);
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < REL_TOL {
                if let Some(j) = streak.iter().position(|&s| s > 0) {
                    return Err(Error::DegenerateComponent { class: 0, component: j });
                }
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        m_step(points, &resp, &mut mix, &mut streak)?;
    }
    Ok(MixtureFit {
        mixture: mix,
        log_likelihood: trace,
        converged,
    })
}

fn e_step(points: &[[f64; 2]], mix: &Mixture, resp: &mut [f64]) -> f64 {
    let m = mix.components();
    let logw: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = &mut resp[i * m..(i + 1) * m];
        for j in 0..m {
            r[j] = logw[j] + log_normal(*p, mix.means[j], mix.covariances[j]);
        }
        let lse = log_sum_exp(r);
        ll += lse;
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    ll
}

fn m_step(points: &[[f64; 2]], resp: &[f64], mix: &mut Mixture, streak: &mut [usize]) -> Result<()> {
    let m = mix.components();
    let n = points.len() as f64;
    for j in 0..m {
        let mut nk = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * m + j];
            nk += r;
            sx += r * p[0];
            sy += r * p[1];
        }
        if !(nk > 1e-12) {
            return Err(Error::DegenerateComponent { class: 0, component: j });
        }
        let mu = [sx / nk, sy / nk];
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * m + j];
            let dx = p[0] - mu[0];
            let dy = p[1] - mu[1];
            cxx += r * dx * dx;
            cxy += r * dx * dy;
            cyy += r * dy * dy;
        }
        let mut c = [cxx / nk, cxy / nk, cyy / nk];
        let (lo, _) = sym2_eigenvalues(c[0], c[1], c[2]);
        if lo < COV_FLOOR {
            let bump = COV_FLOOR - lo;
            c[0] += bump;
            c[2] += bump;
            streak[j] += 1;
            if streak[j] >= FLOOR_STREAK {
                return Err(Error::DegenerateComponent { class: 0, component: j });
            }
        } else {
            streak[j] = 0;
        }
        mix.weights[j] = nk / n;
        mix.means[j] = mu;
        mix.covariances[j] = c;
    }
    let total: f64 = mix.weights.iter().sum();
    mix.weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

fn init_kmeanspp(points: &[[f64; 2]], m: usize, seed: u64) -> Mixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut dist: Vec<f64> = points.iter().map(|p| d2(*p, centers[0])).collect();
    while centers.len() < m {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            points[pick]
        } else {
            points[rng.random_range(0..points.len())]
        };
        centers.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(d2(*p, next));
        }
    }
    let global = moments(points.iter());
    let mut groups: Vec<Vec<[f64; 2]>> = vec![Vec::new(); m];
    for p in points {
        let j = (0..m)
            .min_by(|&a, &b| d2(*p, centers[a]).total_cmp(&d2(*p, centers[b])))
            .unwrap_or(0);
        groups[j].push(*p);
    }
    let n = points.len() as f64;
    let mut mix = Mixture {
        weights: Vec::with_capacity(m),
        means: Vec::with_capacity(m),
        covariances: Vec::with_capacity(m),
    };
    for (j, g) in groups.iter().enumerate() {
        let (mu, mut c) = if g.len() >= 2 { moments(g.iter()) } else { (centers[j], global.1) };
        let (lo, _) = sym2_eigenvalues(c[0], c[1], c[2]);
        if lo < COV_FLOOR {
            let bump = COV_FLOOR - lo;
            c[0] += bump;
            c[2] += bump;
        }
        mix.weights.push((g.len().max(1)) as f64 / n);
        mix.means.push(mu);
        mix.covariances.push(c);
    }
    let total: f64 = mix.weights.iter().sum();
    mix.weights.iter_mut().for_each(|w| *w /= total);
    mix
}

fn moments<'a>(pts: impl Iterator<Item = &'a [f64; 2]> + Clone) -> ([f64; 2], [f64; 3]) {
    let mut n = 0.0;
    let mut s = [0.0; 2];
    for p in pts.clone() {
        n += 1.0;
        s[0] += p[0];
        s[1] += p[1];
    }
    let mu = [s[0] / n, s[1] / n];
    let mut c = [0.0; 3];
    for p in pts {
        let dx = p[0] - mu[0];
        let dy = p[1] - mu[1];
        c[0] += dx * dx;
        c[1] += dx * dy;
        c[2] += dy * dy;
    }
    (mu, c.map(|v| v / n))
}
