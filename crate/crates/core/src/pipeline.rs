//! End-to-end training and detection built from the stage modules.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};

use crate::classmodel::{
    class_prob_volume, fit_gmm_em, samples_from_mask, temporal_average, Class, FeatureSample, GmmFit, GmmModel,
    ProbVolume,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::events::{connected_components, EventEngine, EventRecord, FrameInput};
use crate::imgio::{estimate_disk, timestamp_name, write_pgm8, write_pgm8_scaled, DiskGeometry, FrameBuffer};
use crate::preprocess::{
    apply_shift, mean_std, normalize, register_translation_with, structural_bandpass_with, BandpassState,
    DisplacementVector,
};
use crate::segment::{segment_frame_with, LabelMap, PALETTE};
use crate::varsolve::PottsState;

/// Bandpassed feature image and disk geometry of a single frame.
pub fn frame_features(frame: &FrameBuffer, cfg: &PipelineConfig) -> Result<(FrameBuffer, DiskGeometry)> {
    let geom = estimate_disk(frame)?;
    let norm = normalize(frame)?;
    let bp = structural_bandpass_with(&norm, cfg.bandpass()?, cfg.solve_settings(false), None)?;
    Ok((bp.frame, geom))
}

/// Labeled training pixels of one annotated frame.
pub fn training_samples(frame: &FrameBuffer, mask: &[u8], cfg: &PipelineConfig) -> Result<Vec<FeatureSample>> {
    let (bp, geom) = frame_features(frame, cfg)?;
    let seed = cfg.classmodel.seed ^ (frame.frame_index() as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
    samples_from_mask(&bp, &geom, mask, cfg.classmodel.samples_per_class, seed)
}

/// Fits the class model on annotated frames.
pub fn train<'a>(pairs: impl IntoIterator<Item = (&'a FrameBuffer, &'a [u8])>, cfg: &PipelineConfig) -> Result<GmmFit> {
    let mut samples = Vec::new();
    for (frame, mask) in pairs {
        samples.extend(training_samples(frame, mask, cfg)?);
    }
    fit_gmm_em(&samples, &cfg.em())
}

/// Reads a `frame,mask` list. Relative paths resolve against `base`.
pub fn read_training_list(text: &str, base: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "frame,mask" {
            continue;
        }
        let (f, m) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("training list line {}: expected frame,mask", n + 1)))?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p.trim());
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        out.push((resolve(f), resolve(m)));
    }
    Ok(out)
}

/// Everything produced for one processed frame.
#[derive(Debug, Clone)]
pub struct FrameReport {
    pub records: Vec<EventRecord>,
    pub labels: LabelMap,
    pub filament_mask: Vec<bool>,
    pub shift: DisplacementVector,
    pub iterations: (usize, usize, usize),
}

struct Reference {
    normalized: FrameBuffer,
    geom: DiskGeometry,
}

/// Stateful frame-by-frame detector. Frames must arrive in time order;
/// a failed frame leaves the state untouched so the caller may skip it.
pub struct Detector {
    cfg: PipelineConfig,
    model: GmmModel,
    engine: EventEngine,
    reference: Option<Reference>,
    previous: Option<ProbVolume>,
    bandpass_state: Option<BandpassState>,
    potts_state: Option<PottsState>,
    debug_dir: Option<PathBuf>,
}

impl Detector {
    pub fn new(cfg: PipelineConfig, model: GmmModel) -> Result<Self> {
        cfg.validate()?;
        let debug_dir = cfg.io.debug_dir.clone();
        if let Some(d) = &debug_dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Self {
            engine: EventEngine::new(cfg.event_params()),
            cfg,
            model,
            reference: None,
            previous: None,
            bandpass_state: None,
            potts_state: None,
            debug_dir,
        })
    }

    /// Disk geometry of the reference frame, once one has been accepted.
    pub fn geometry(&self) -> Option<DiskGeometry> {
        self.reference.as_ref().map(|r| r.geom)
    }

    pub fn process(&mut self, frame: &FrameBuffer) -> Result<FrameReport> {
        let cfg = &self.cfg;
        let exec = cfg.exec();
        let geom_here = estimate_disk(frame)?;
        let norm = normalize(frame)?;
        let (registered, intensity, shift, geom) = match &self.reference {
            None => (norm.clone(), frame.clone(), DisplacementVector::default(), geom_here),
            Some(r) => {
                let d = register_translation_with(&r.normalized, &norm, cfg.preprocess.pyramid_levels, exec)?;
                let by_disk = DisplacementVector::new(r.geom.center_x - geom_here.center_x, r.geom.center_y - geom_here.center_y);
                if DisplacementVector::new(d.u1 - by_disk.u1, d.u2 - by_disk.u2).norm() > 2.0 {
                    warn!(
                        "frame {}: registration ({:.2}, {:.2}) disagrees with disk fit ({:.2}, {:.2})",
                        frame.frame_index(),
                        d.u1,
                        d.u2,
                        by_disk.u1,
                        by_disk.u2
                    );
                }
                (apply_shift(&norm, d), apply_shift(frame, d), d, r.geom)
            }
        };
        let bp = structural_bandpass_with(
            &registered,
            cfg.bandpass()?,
            cfg.solve_settings(false),
            self.bandpass_state.as_ref(),
        )?;
        let probs = class_prob_volume(&bp.frame, &geom, &self.model, exec)?;
        let averaged = temporal_average(self.previous.as_ref(), &probs, cfg.classmodel.temporal_alpha)?;
        let seg = segment_frame_with(
            &averaged,
            cfg.segment.lambda_data,
            cfg.solve_settings(true),
            self.potts_state.as_ref(),
        )?;
        let bright = bright_mask(&bp.frame, &seg.labels, &geom, cfg);
        let out = self.engine.process(FrameInput {
            labels: &seg.labels,
            intensity: &intensity,
            geom: &geom,
            bright: &bright,
        })?;
        debug!(
            "frame {}: shift ({:.2}, {:.2}), bandpass {:?} iterations, potts {}",
            frame.frame_index(),
            shift.u1,
            shift.u2,
            bp.iterations,
            seg.iterations
        );
        if let Some(dir) = &self.debug_dir {
            write_debug(dir, &bp.frame, &averaged, &seg.labels)?;
        }
        if self.reference.is_none() {
            self.reference = Some(Reference { normalized: norm, geom });
        }
        self.previous = Some(averaged);
        self.bandpass_state = Some(bp.state);
        self.potts_state = Some(seg.state);
        Ok(FrameReport {
            records: out.records,
            labels: seg.labels,
            filament_mask: out.filament_mask,
            shift,
            iterations: (bp.iterations.0, bp.iterations.1, seg.iterations),
        })
    }

    /// Closes tracks still open at the end of the sequence.
    pub fn finish(&mut self) -> Vec<EventRecord> {
        self.engine.finish()
    }
}

/// Flare pixels plus sizeable regions whose bandpass response exceeds
/// `bright_sigma` on-disk standard deviations, dilated.
fn bright_mask(bp: &FrameBuffer, labels: &LabelMap, geom: &DiskGeometry, cfg: &PipelineConfig) -> Vec<bool> {
    let (w, h) = (bp.width(), bp.height());
    let on_disk: Vec<f32> = (0..w * h)
        .filter(|&i| geom.radial((i % w) as f64, (i / w) as f64) < 1.0)
        .map(|i| bp.data()[i])
        .collect();
    let (_, std) = mean_std(&on_disk);
    let level = (cfg.events.bright_sigma * std) as f32;
    let hot: Vec<bool> = bp.data().iter().map(|&v| v > level).collect();
    let mut seed: Vec<bool> = labels.labels().iter().map(|&l| l == Class::Flare.id()).collect();
    for c in connected_components(&hot, w) {
        if c.area() >= cfg.events.min_area {
            c.paint(&mut seed, w);
        }
    }
    let r = cfg.events.bright_dilate_px;
    let ri = r.floor() as i64;
    let offsets: Vec<(i64, i64)> = (-ri..=ri)
        .flat_map(|dy| (-ri..=ri).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r * r)
        .collect();
    let mut out = vec![false; w * h];
    for (i, _) in seed.iter().enumerate().filter(|(_, &s)| s) {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out[ny as usize * w + nx as usize] = true;
            }
        }
    }
    out
}

fn write_debug(dir: &Path, bp: &FrameBuffer, probs: &ProbVolume, labels: &LabelMap) -> Result<()> {
    let stem = format!("frame_{}", timestamp_name(bp.timestamp()));
    let (w, h) = (bp.width(), bp.height());
    write_pgm8_scaled(dir.join(format!("{stem}_bandpass.pgm")), w, h, bp.data())?;
    for c in Class::ALL {
        write_pgm8_scaled(dir.join(format!("{stem}_nll_{}.pgm", c.name())), w, h, &probs.plane(c as usize))?;
    }
    let palette: Vec<u8> = labels.labels().iter().map(|&l| PALETTE[l as usize]).collect();
    write_pgm8(dir.join(format!("{stem}_labels.pgm")), w, h, &palette)
}
