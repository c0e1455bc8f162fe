use crate::error::{Error, Result};
use crate::imgio::FrameBuffer;
use crate::varsolve::{tvl1_solve, SolveSettings, Tvl1Problem, Tvl1State};

/// Data weights of the two TV-L1 solves; structures with radius between
/// `2/lambda1` and `2/lambda2` pixels pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for BandpassParams {
    fn default() -> Self {
        Self {
            lambda1: 0.9,
            lambda2: 0.1,
        }
    }
}

impl BandpassParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let p = Self { lambda1, lambda2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > self.lambda2 && self.lambda2 > 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandpass needs lambda1 > lambda2 > 0, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

/// Solver iterates of both solves, for warm-starting the next frame.
#[derive(Debug, Clone)]
pub struct BandpassState {
    pub fine: Tvl1State,
    pub coarse: Tvl1State,
}

#[derive(Debug, Clone)]
pub struct BandpassOutput {
    pub frame: FrameBuffer,
    pub iterations: (usize, usize),
    pub state: BandpassState,
}

/// `v1 - v2` with `v_i` the TV-L1 solution at `lambda_i`.
pub fn structural_bandpass(frame: &FrameBuffer, params: BandpassParams) -> Result<FrameBuffer> {
    structural_bandpass_with(frame, params, SolveSettings::TVL1_DEFAULT, None).map(|o| o.frame)
}

pub fn structural_bandpass_with(
    frame: &FrameBuffer,
    params: BandpassParams,
    settings: SolveSettings,
    warm: Option<&BandpassState>,
) -> Result<BandpassOutput> {
    params.validate()?;
    // TV-L1 commutes with constant offsets; solving on centered data keeps the
    // result independent of the input level.
    let mean = frame.data().iter().map(|&v| v as f64).sum::<f64>() / frame.len() as f64;
    let centered = frame.with_data(frame.data().iter().map(|&v| (v as f64 - mean) as f32).collect())?;
    let fine = tvl1_solve(
        &Tvl1Problem::new(&centered, params.lambda1).with_settings(settings),
        warm.map(|s| &s.fine),
    )?;
    let coarse = tvl1_solve(
        &Tvl1Problem::new(&centered, params.lambda2).with_settings(settings),
        warm.map(|s| &s.coarse),
    )?;
    let data = fine.frame.data().iter().zip(coarse.frame.data()).map(|(a, b)| a - b).collect();
    Ok(BandpassOutput {
        frame: frame.with_data(data)?,
        iterations: (fine.iterations, coarse.iterations),
        state: BandpassState {
            fine: fine.state,
            coarse: coarse.state,
        },
    })
}
