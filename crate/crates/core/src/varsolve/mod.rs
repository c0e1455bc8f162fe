//! First-order primal-dual solvers for the TV-L1 model and the convex
//! relaxation of the multi-label Potts (minimal partition) model.
//!
//! Both solvers use forward differences with replicate (Neumann) boundaries
//! and the step sizes τ = σ = 1/√8, which satisfy τσ‖∇‖² ≤ 1 in 2D.

mod potts;
mod simplex;
mod tvl1;

pub use potts::{labeling_energy, potts_energy, potts_relax, potts_solve, round_labeling, PottsProblem, PottsSolution, PottsState, RelaxedLabeling};
pub use simplex::project_simplex;
pub use tvl1::{tvl1_denoise, tvl1_energy, tvl1_solve, Tvl1Problem, Tvl1Solution, Tvl1State};

use crate::error::{Error, Result};
use crate::par::Exec;

pub(crate) const STEP: f32 = 0.353_553_39; // 1/sqrt(8)

/// Iteration control shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub max_iters: usize,
    /// Iterations between energy evaluations.
    pub check_interval: usize,
    /// Stop once the relative energy change between checks drops below this.
    pub tol: f64,
    pub exec: Exec,
}

impl SolveSettings {
    pub const TVL1_DEFAULT: SolveSettings = SolveSettings {
        max_iters: 2000,
        check_interval: 50,
        tol: 1e-5,
        exec: Exec::Parallel,
    };

    pub const POTTS_DEFAULT: SolveSettings = SolveSettings {
        max_iters: 1500,
        check_interval: 50,
        tol: 1e-5,
        exec: Exec::Parallel,
    };

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.check_interval == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("solver settings {self:?}")));
        }
        Ok(())
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    let scale = prev.abs().max(cur.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (prev - cur).abs() / scale
    }
}
