#![allow(dead_code)]

use halpha_core::classmodel::GmmModel;
use halpha_core::config::PipelineConfig;
use halpha_core::pipeline::train;
use halpha_core::synth::{generate_sequence, Scenario};
use halpha_core::Exec;

/// Scenario used only for fitting the class model: every class present,
/// objects placed away from the evaluation scenes.
pub fn training_scenario() -> Scenario {
    Scenario::from_toml(
        r#"seed = 99
width = 512
height = 512
frames = 12
cadence_s = 30.0
start = "2012-07-03T08:00:00Z"
noise_sigma = 8.0

[disk]
center = [250.0, 262.0]
radius = 238.0
drift = [0.1, 0.05]

[clouds]
strength = 0.12
blobs = 3
sigma_px = 160.0
drift = [1.0, -0.5]

[[filament]]
points = [[120.0, 300.0], [160.0, 280.0], [200.0, 290.0], [240.0, 275.0]]

[[filament]]
points = [[280.0, 140.0], [310.0, 170.0], [340.0, 175.0]]
width = 5.0

[[filament]]
points = [[200.0, 400.0], [260.0, 395.0]]
width = 7.0

[[flare]]
center = [320.0, 300.0]
ribbons = 2
semi_axes = [9.0, 3.0]
separation = 12.0
angle_deg = -30.0
onset_frame = 0
rise_frames = 4
decay_frames = 30

[[flare]]
center = [150.0, 180.0]
semi_axes = [6.0, 4.0]
onset_frame = 2
decay_frames = 30

[[sunspot]]
center = [350.0, 330.0]
radius = 7.0

[[sunspot]]
center = [180.0, 360.0]
radius = 4.0

[[plage]]
center = [330.0, 310.0]
radius = 35.0
brightness = 0.12
"#,
    )
    .expect("training scenario is valid")
}

pub fn trained_model(cfg: &PipelineConfig) -> GmmModel {
    let seq = generate_sequence(&training_scenario(), Exec::Parallel).unwrap();
    let pairs: Vec<_> = seq
        .frames
        .iter()
        .zip(&seq.truth)
        .step_by(3)
        .map(|(f, t)| (f, t.labels()))
        .collect();
    train(pairs, cfg).unwrap().model
}
