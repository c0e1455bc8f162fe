//! Intensity normalization, translational registration and the structural
//! bandpass filter.

mod bandpass;
mod register;

pub use bandpass::{structural_bandpass, structural_bandpass_with, BandpassOutput, BandpassParams, BandpassState};
pub use register::{apply_shift, register_translation, register_translation_with, DisplacementVector, DEFAULT_PYRAMID_LEVELS};

use crate::error::{Error, Result};
use crate::imgio::FrameBuffer;

/// Zero-mean, unit-variance standardization over the whole frame.
pub fn normalize(frame: &FrameBuffer) -> Result<FrameBuffer> {
    let (mean, std) = mean_std(frame.data());
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateFrame);
    }
    let data = frame.data().iter().map(|&v| ((v as f64 - mean) / std) as f32).collect();
    frame.with_data(data)
}

/// Mean and population standard deviation, accumulated in f64.
pub fn mean_std(data: &[f32]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
