//! Integrating-factor RK4 (Lawson) for `∂_t u = Δu − P∇·(u⊗u)`.

use super::{FlowTrajectory, SpectralOps, StepRecord};
use crate::error::{Error, Result};
use crate::fields::{assemble_spectral, check_divergence_free, check_symmetry, DatumSpec, Grid, SpectralField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOWUP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `stride`-th step as a snapshot (0 keeps only the ends).
    pub snapshot_stride: usize,
    /// Additional times whose nearest node is kept as a snapshot.
    #[serde(default)]
    pub capture_times: Vec<f64>,
    pub blowup_factor: f64,
    /// Record divergence and symmetry defects at every node.
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            snapshot_stride: 0,
            capture_times: Vec::new(),
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            check_invariants: true,
        }
    }

    /// A step no larger than `dt_target` that divides `t_align` exactly.
    pub fn aligned_dt(dt_target: f64, t_align: f64) -> f64 {
        t_align / (t_align / dt_target).ceil()
    }

    fn validate(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        Ok((self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize)
    }
}

fn record(u: &SpectralField, check: bool) -> StepRecord {
    let (divergence, symmetry) = if check {
        let scale = u.max_abs();
        let sym = if scale > 0.0 { check_symmetry(u) / scale } else { 0.0 };
        (check_divergence_free(u), sym)
    } else {
        (0.0, 0.0)
    };
    StepRecord {
        time: u.time,
        energy: u.energy(),
        divergence,
        symmetry,
        moments: u.second_moments(),
    }
}

/// Runs the flow of the datum described by `spec`.
pub fn simulate(spec: &DatumSpec, grid: Grid, cfg: &SimConfig) -> Result<FlowTrajectory> {
    let u0 = assemble_spectral(spec, grid)?;
    simulate_from(u0, cfg)
}

/// Runs the flow from an arbitrary divergence-free field.
pub fn simulate_from(u0: SpectralField, cfg: &SimConfig) -> Result<FlowTrajectory> {
    let steps = cfg.validate()?;
    let grid = u0.grid;
    let ops = SpectralOps::new(grid);
    let h = if steps > 0 { cfg.t_end / steps as f64 } else { cfg.dt };
    let e_full: Vec<f64> = ops.k2.iter().map(|q| (-h * q).exp()).collect();
    let e_half: Vec<f64> = ops.k2.iter().map(|q| (-0.5 * h * q).exp()).collect();
    let t0 = u0.time;
    let capture: Vec<usize> = cfg
        .capture_times
        .iter()
        .map(|&t| ((t - t0) / h).round().max(0.0) as usize)
        .collect();
    let norm0 = u0.l2_norm();
    let mut traj = FlowTrajectory {
        grid,
        scheme: "integrating-factor RK4".into(),
        dt: h,
        snapshots: vec![u0.clone()],
        records: vec![record(&u0, cfg.check_invariants)],
    };
    let d = grid.dim.n();
    let combine = |a: &SpectralField, ma: &[f64], b: &SpectralField, s: f64, mb: Option<&[f64]>| -> SpectralField {
        // ma·a + s·(mb·b)
        let mut out = a.clone();
        for c in 0..d {
            for f in 0..grid.len() {
                let bb = match mb {
                    Some(m) => b.comps[c][f] * m[f],
                    None => b.comps[c][f],
                };
                out.comps[c][f] = a.comps[c][f] * ma[f] + bb * s;
            }
        }
        out
    };
    let ones = vec![1.0; grid.len()];
    let mut u = u0;
    for n in 1..=steps {
        let t = t0 + (n - 1) as f64 * h;
        let mut k1 = ops.nonlinear(&u);
        k1.scale(-1.0);
        let s2 = combine(&u, &ones, &k1, 0.5 * h, None);
        let mut s2 = s2;
        ops.apply_multiplier(&mut s2, &e_half);
        let mut k2 = ops.nonlinear(&s2);
        k2.scale(-1.0);
        let s3 = combine(&u, &e_half, &k2, 0.5 * h, None);
        let mut k3 = ops.nonlinear(&s3);
        k3.scale(-1.0);
        let s4 = combine(&u, &e_full, &k3, h, Some(&e_half));
        let mut k4 = ops.nonlinear(&s4);
        k4.scale(-1.0);
        for c in 0..d {
            for f in 0..grid.len() {
                let inc: Complex64 = k1.comps[c][f] * e_full[f]
                    + (k2.comps[c][f] + k3.comps[c][f]) * (2.0 * e_half[f])
                    + k4.comps[c][f];
                u.comps[c][f] = u.comps[c][f] * e_full[f] + inc * (h / 6.0);
            }
        }
        u.time = t + h;
        let rec = record(&u, cfg.check_invariants);
        let norm = (2.0 * rec.energy).sqrt();
        if !norm.is_finite() || (norm0 > 0.0 && norm > cfg.blowup_factor * norm0) {
            return Err(Error::Divergence {
                time: u.time,
                ratio: norm / norm0,
            });
        }
        traj.records.push(rec);
        let keep = (cfg.snapshot_stride > 0 && n % cfg.snapshot_stride == 0) || capture.contains(&n) || n == steps;
        if keep {
            traj.snapshots.push(u.clone());
        }
    }
    Ok(traj)
}
