//! Pipeline settings with TOML persistence and dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classmodel::EmConfig;
use crate::error::{Error, Result};
use crate::eval::Tolerances;
use crate::events::{EruptionParams, EventParams, FilamentFilter, Importance, IMPORTANCE_THRESHOLDS};
use crate::par::Exec;
use crate::preprocess::{BandpassParams, DEFAULT_PYRAMID_LEVELS};
use crate::varsolve::SolveSettings;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub classmodel: ClassModelConfig,
    pub segment: SegmentConfig,
    pub events: EventsConfig,
    pub eval: EvalConfig,
    pub solver: SolverConfig,
    pub io: IoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub pyramid_levels: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let b = BandpassParams::default();
        Self {
            lambda1: b.lambda1,
            lambda2: b.lambda2,
            pyramid_levels: DEFAULT_PYRAMID_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassModelConfig {
    pub components: usize,
    pub temporal_alpha: f64,
    /// Training pixels kept per class and frame.
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for ClassModelConfig {
    fn default() -> Self {
        Self {
            components: EmConfig::default().components,
            temporal_alpha: 0.5,
            samples_per_class: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub lambda_data: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { lambda_data: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    pub min_area: usize,
    pub group_dist_filament: f64,
    pub group_dist_flare: f64,
    pub vote_window: usize,
    pub sunspot_border_px: f64,
    pub compactness_max: f64,
    pub eruption_window_s: f64,
    pub eruption_min_frames: usize,
    /// Radius beyond which vanishing filaments are not reported; negative
    /// disables the guard.
    pub limb_guard_radial: f64,
    pub importance_thresholds: [f64; 4],
    /// Smallest flare importance written to the event stream.
    pub min_report_importance: Importance,
    pub b0_deg: f64,
    /// Bandpass level, in on-disk standard deviations, marking bright regions.
    pub bright_sigma: f64,
    pub bright_dilate_px: f64,
}

impl Default for EventsConfig {
    fn default() -> Self {
        let p = EventParams::default();
        Self {
            min_area: p.min_area,
            group_dist_filament: p.group_dist_filament,
            group_dist_flare: p.group_dist_flare,
            vote_window: p.vote_window,
            sunspot_border_px: p.filter.sunspot_border_px,
            compactness_max: p.filter.compactness_max,
            eruption_window_s: p.eruption.window_s,
            eruption_min_frames: p.eruption.min_frames,
            limb_guard_radial: p.eruption.limb_guard_radial.unwrap_or(-1.0),
            importance_thresholds: IMPORTANCE_THRESHOLDS,
            min_report_importance: p.min_report_importance,
            b0_deg: p.b0_deg,
            bright_sigma: 2.5,
            bright_dilate_px: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub flare_time_s: f64,
    pub flare_deg: f64,
    pub eruption_time_s: f64,
    pub eruption_deg: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            flare_time_s: t.flare_time_s,
            flare_deg: t.flare_deg,
            eruption_time_s: t.eruption_time_s,
            eruption_deg: t.eruption_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub parallel: bool,
    pub tvl1_max_iters: usize,
    pub potts_max_iters: usize,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            parallel: true,
            tvl1_max_iters: 400,
            potts_max_iters: SolveSettings::POTTS_DEFAULT.max_iters,
            tol: SolveSettings::TVL1_DEFAULT.tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debug_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `section.key=value`. The value is parsed as a TOML literal,
    /// falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Table::try_from(&*self).expect("config serializes");
        let parts: Vec<&str> = key.split('.').collect();
        let (last, sections) = parts.split_last().expect("split yields one part");
        let mut table = &mut root;
        for s in sections {
            table = table
                .get_mut(*s)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Parse(format!("unknown config section {s:?} in {key:?}")))?;
        }
        let known = sections.first().is_some_and(|s| *s == "io") || table.contains_key(*last);
        if sections.is_empty() || !known {
            return Err(Error::Parse(format!("unknown config key {key:?}")));
        }
        table.insert(last.to_string(), value);
        let updated: PipelineConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(format!("override {key:?}: {}", e.message())))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.bandpass()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.preprocess.pyramid_levels == 0 {
            return bad("preprocess.pyramid_levels must be at least 1".into());
        }
        let c = &self.classmodel;
        if c.components == 0 || c.samples_per_class == 0 {
            return bad("classmodel.components and samples_per_class must be positive".into());
        }
        if !(c.temporal_alpha > 0.0 && c.temporal_alpha <= 1.0) {
            return bad(format!("classmodel.temporal_alpha {} outside (0, 1]", c.temporal_alpha));
        }
        if !(self.segment.lambda_data > 0.0 && self.segment.lambda_data.is_finite()) {
            return bad(format!("segment.lambda_data {} must be positive", self.segment.lambda_data));
        }
        let e = &self.events;
        if e.vote_window == 0 || !(e.group_dist_filament >= 0.0 && e.group_dist_flare >= 0.0) {
            return bad("events.vote_window must be positive and grouping distances non-negative".into());
        }
        if !(e.eruption_window_s > 0.0) || !(e.sunspot_border_px >= 0.0) || !(e.bright_dilate_px >= 0.0) {
            return bad("events window, border and dilation must be non-negative".into());
        }
        if !e.importance_thresholds.windows(2).all(|w| w[0] < w[1]) {
            return bad("events.importance_thresholds must increase".into());
        }
        self.solve_settings(false).validate()?;
        self.solve_settings(true).validate()
    }

    pub fn exec(&self) -> Exec {
        if self.solver.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn bandpass(&self) -> Result<BandpassParams> {
        BandpassParams::new(self.preprocess.lambda1, self.preprocess.lambda2)
    }

    /// Solver settings for TV-L1 (`potts == false`) or Potts.
    pub fn solve_settings(&self, potts: bool) -> SolveSettings {
        let base = if potts {
            SolveSettings::POTTS_DEFAULT
        } else {
            SolveSettings::TVL1_DEFAULT
        };
        SolveSettings {
            max_iters: if potts {
                self.solver.potts_max_iters
            } else {
                self.solver.tvl1_max_iters
            },
            tol: self.solver.tol,
            ..base
        }
        .with_exec(self.exec())
    }

    pub fn em(&self) -> EmConfig {
        EmConfig {
            components: self.classmodel.components,
            seed: self.classmodel.seed,
            ..EmConfig::default()
        }
    }

    pub fn event_params(&self) -> EventParams {
        let e = &self.events;
        EventParams {
            min_area: e.min_area,
            group_dist_filament: e.group_dist_filament,
            group_dist_flare: e.group_dist_flare,
            vote_window: e.vote_window,
            filter: FilamentFilter {
                sunspot_border_px: e.sunspot_border_px,
                compactness_max: e.compactness_max,
            },
            eruption: EruptionParams {
                window_s: e.eruption_window_s,
                min_frames: e.eruption_min_frames,
                limb_guard_radial: (e.limb_guard_radial >= 0.0).then_some(e.limb_guard_radial),
            },
            importance_thresholds: e.importance_thresholds,
            min_report_importance: e.min_report_importance,
            b0_deg: e.b0_deg,
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        let t = &self.eval;
        Tolerances {
            flare_time_s: t.flare_time_s,
            flare_deg: t.flare_deg,
            eruption_time_s: t.eruption_time_s,
            eruption_deg: t.eruption_deg,
        }
    }
}
