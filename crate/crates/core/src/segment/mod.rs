//! Hard multi-label segmentation of a probability volume.

use chrono::{DateTime, Utc};

use crate::classmodel::{Class, ProbVolume};
use crate::error::{Error, Result};
use crate::varsolve::{potts_solve, round_labeling, PottsProblem, PottsState, SolveSettings};

/// Palette used when writing label maps as 8-bit images.
pub const PALETTE: [u8; 4] = [0, 85, 170, 255];

/// Per-pixel class ids for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    classes: usize,
    labels: Vec<u8>,
    timestamp: DateTime<Utc>,
    frame_index: usize,
}

impl LabelMap {
    pub fn new(
        width: usize,
        height: usize,
        classes: usize,
        labels: Vec<u8>,
        timestamp: DateTime<Utc>,
        frame_index: usize,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "label map {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= classes) {
            return Err(Error::InvalidParameter(format!("label {} at pixel {i} exceeds {classes} classes", labels[i])));
        }
        Ok(LabelMap {
            width,
            height,
            classes,
            labels,
            timestamp,
            frame_index,
        })
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

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.timestamp
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn mask(&self, class: Class) -> Vec<bool> {
        self.labels.iter().map(|&l| l == class.id()).collect()
    }

    pub fn count(&self, class: Class) -> usize {
        self.labels.iter().filter(|&&l| l == class.id()).count()
    }

    /// Label ids mapped through [`PALETTE`].
    pub fn to_palette(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| PALETTE.get(l as usize).copied().unwrap_or(255)).collect()
    }
}

/// Result of segmenting one frame, with solver state for the next one.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelMap,
    pub iterations: usize,
    pub energy: f64,
    pub state: PottsState,
}

pub fn segment_frame(probs: &ProbVolume, lambda_data: f64) -> Result<LabelMap> {
    segment_frame_with(probs, lambda_data, SolveSettings::POTTS_DEFAULT, None).map(|s| s.labels)
}

/// Segments with explicit solver settings and an optional warm start.
pub fn segment_frame_with(
    probs: &ProbVolume,
    lambda_data: f64,
    settings: SolveSettings,
    warm: Option<&PottsState>,
) -> Result<Segmentation> {
    if !(lambda_data > 0.0 && lambda_data.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda_data {lambda_data} must be positive")));
    }
    let problem = PottsProblem::new(probs, lambda_data).with_settings(settings);
    let sol = potts_solve(&problem, warm)?;
    Ok(Segmentation {
        labels: round_labeling(&sol.labeling),
        iterations: sol.iterations,
        energy: sol.energy,
        state: sol.state,
    })
}
