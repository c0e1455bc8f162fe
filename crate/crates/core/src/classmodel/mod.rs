//! Per-pixel features, class-conditional Gaussian mixtures trained by EM,
//! negative-log-likelihood volumes and their temporal smoothing.

mod features;
mod gmm;
mod volume;

pub use features::{pixel_features, samples_from_mask, FeatureSample, UNLABELED};
pub use gmm::{fit_gmm_em, fit_mixture, gmm_nll, EmConfig, GmmFit, GmmModel, Mixture, MixtureFit, NLL_MAX};
pub use volume::{class_prob_volume, temporal_average, ProbVolume, OFF_DISK_RADIAL};

use serde::{Deserialize, Serialize};

/// Segmentation classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Class {
    Sunspot = 0,
    Filament = 1,
    Flare = 2,
    Background = 3,
}

pub const NUM_CLASSES: usize = 4;

impl Class {
    pub const ALL: [Class; NUM_CLASSES] = [Class::Sunspot, Class::Filament, Class::Flare, Class::Background];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Class> {
        Class::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Sunspot => "sunspot",
            Class::Filament => "filament",
            Class::Flare => "flare",
            Class::Background => "background",
        }
    }
}
