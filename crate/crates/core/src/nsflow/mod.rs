//! Navier–Stokes evolution of the datum on a periodic box: heat flow,
//! Leray projection, an integrating-factor Runge–Kutta stepper, the Picard
//! series of the mild formulation, and the moment matrix
//! `K(t) = ∫₀ᵗ∫ u⊗u dx ds` with its off-diagonal zeros.

mod calibrate;
mod moments;
mod ops;
mod picard;
mod stepper;

pub use calibrate::{
    calibrate, remainder_report, run_at, second_order_moments, CalibratedRun, Calibration, CalibrationOptions,
    RemainderReport, DEFAULT_TARGET_FRACTION, REMAINDER_BOUND,
};
pub use moments::{
    accumulate_k, accumulate_k_from, find_zero_k12, fnorm_diag, heat_flow_fnorm, is_isotropic, refine_zero,
    MomentTrajectory, ZeroBracket, ZeroSearch,
};
pub use ops::{heat, heat_in_place, leray_project, project_in_place, sym_pairs, SpectralOps};
pub use picard::{bilinear_b, picard_term, PicardSeries, DEFAULT_MAX_ORDER};
pub use stepper::{simulate, simulate_from, SimConfig, DEFAULT_BLOWUP_FACTOR};

use crate::fields::{Grid, SpectralField};
use crate::geometry::Mat3;
use serde::{Deserialize, Serialize};

/// Diagnostics recorded at every time node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub energy: f64,
    /// `max|k·û| / max|û|`.
    pub divergence: f64,
    /// Symmetry defect relative to `max|û|`.
    pub symmetry: f64,
    /// `∫ u_i u_j dx`.
    pub moments: Mat3,
}

/// Worst values of the per-step invariants over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub max_divergence: f64,
    pub max_symmetry: f64,
    /// Largest relative energy increase over one step (`≤ 0` means monotone).
    pub max_energy_increase: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub grid: Grid,
    pub scheme: String,
    pub dt: f64,
    /// Retained snapshots (every `stride` steps, requested captures, and the end).
    pub snapshots: Vec<SpectralField>,
    /// One record per time node, including `t = 0`.
    pub records: Vec<StepRecord>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn final_field(&self) -> &SpectralField {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// The retained snapshot closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> Option<&SpectralField> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }

    pub fn invariants(&self) -> InvariantSummary {
        let mut s = InvariantSummary {
            max_energy_increase: f64::NEG_INFINITY,
            ..Default::default()
        };
        for r in &self.records {
            s.max_divergence = s.max_divergence.max(r.divergence);
            s.max_symmetry = s.max_symmetry.max(r.symmetry);
        }
        for w in self.records.windows(2) {
            let inc = if w[0].energy > 0.0 { (w[1].energy - w[0].energy) / w[0].energy } else { 0.0 };
            s.max_energy_increase = s.max_energy_increase.max(inc);
        }
        if self.records.len() < 2 {
            s.max_energy_increase = 0.0;
        }
        s
    }
}
