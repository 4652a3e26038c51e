//! Amplitude calibration and the second-order check `K₁₂(t) ≈ −η²E(t)`.
//!
//! The nonlinear part of `K` grows relative to its quadratic part like a
//! power of `η`. Calibration starts from `0.1/fnorm(a)`, measures the
//! nonlinear fraction once at a probe amplitude, uses the `η²` scaling of
//! that fraction to pick an amplitude where the nonlinearity is small but
//! measurable, and then verifies the remainder bound by simulation,
//! halving `η` while it fails.

use super::{accumulate_k, accumulate_k_from, fnorm_diag, simulate, FlowTrajectory, MomentTrajectory, SimConfig};
use crate::correlation::Correlation;
use crate::error::{Error, Result};
use crate::fields::{assemble_spectral, DatumSpec, Grid, SpectralField};
use crate::geometry::Mat3;
use serde::{Deserialize, Serialize};

/// Target nonlinear fraction `max|K₁₂ − η²K₁₂⁽²⁾| / (η² max|E|)`.
pub const DEFAULT_TARGET_FRACTION: f64 = 2e-3;
/// Acceptance bound on `max|K₁₂ + η²E| / (η² max|E|)`.
pub const REMAINDER_BOUND: f64 = 0.1;

/// Heat-flow moment matrix `K⁽²⁾` of `unit` on `times`, integrated with the
/// same trapezoid rule as [`accumulate_k`].
pub fn second_order_moments(unit: &SpectralField, times: &[f64]) -> MomentTrajectory {
    let g = unit.grid;
    let d = g.dim.n();
    let q: Vec<f64> = (0..g.len()).map(|i| crate::geometry::norm2(g.wavenumber(i))).collect();
    let norm = g.length.powi(d as i32);
    let moments: Vec<Mat3> = times
        .iter()
        .map(|&t| {
            let decay: Vec<f64> = q.iter().map(|&q| (-2.0 * t * q).exp()).collect();
            let mut m = [[0.0; 3]; 3];
            for r in 0..d {
                for c in r..d {
                    let s: f64 = unit.comps[r]
                        .iter()
                        .zip(&unit.comps[c])
                        .zip(&decay)
                        .map(|((a, b), e)| e * (a.re * b.re + a.im * b.im))
                        .sum();
                    m[r][c] = s / norm;
                    m[c][r] = m[r][c];
                }
            }
            m
        })
        .collect();
    accumulate_k_from(g.dim, times, &moments, [[0.0; 3]; 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub eta: f64,
    /// `max_t |E(t)|` of the unit datum over the sampled times.
    pub max_e: f64,
    /// `max_t |K₁₂ + η²E| / (η² max|E|)`.
    pub bound_ratio: f64,
    /// `max_t |K₁₂ − η²K₁₂⁽²⁾|`: the nonlinear part of `K₁₂`.
    pub nonlinear: f64,
    /// `nonlinear / (η² max|E|)`.
    pub nonlinear_fraction: f64,
}

/// Compares `K₁₂` of a run at amplitude `eta` with `−η²E` and with the
/// lattice second-order term `η²K⁽²⁾` (both for the unit datum).
pub fn remainder_report(m: &MomentTrajectory, second: &MomentTrajectory, e: &Correlation, eta: f64) -> Result<RemainderReport> {
    if m.times.len() != second.times.len() {
        return Err(Error::Config("moment trajectories are sampled differently".into()));
    }
    let e2 = eta * eta;
    let (mut max_e, mut bound, mut nonlinear) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (i, &t) in m.times.iter().enumerate() {
        let ev = e.value(t);
        max_e = max_e.max(ev.abs());
        bound = bound.max((m.k[i][0][1] + e2 * ev).abs());
        nonlinear = nonlinear.max((m.k[i][0][1] - e2 * second.k[i][0][1]).abs());
    }
    let scale = e2 * max_e;
    Ok(RemainderReport {
        eta,
        max_e,
        bound_ratio: bound / scale,
        nonlinear,
        nonlinear_fraction: nonlinear / scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub target_fraction: f64,
    pub probe_eta: f64,
    pub bound: f64,
    pub max_halvings: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            target_fraction: DEFAULT_TARGET_FRACTION,
            probe_eta: 1.0,
            bound: REMAINDER_BOUND,
            max_halvings: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `fnorm_diag` of the unit datum.
    pub fnorm_unit: f64,
    /// `0.1 / fnorm_unit`.
    pub eta_start: f64,
    pub probe_eta: f64,
    pub probe_fraction: f64,
    pub eta: f64,
    pub halvings: usize,
    pub report: RemainderReport,
}

/// A calibrated run and the objects needed to re-check it.
#[derive(Debug, Clone)]
pub struct CalibratedRun {
    pub calibration: Calibration,
    pub trajectory: FlowTrajectory,
    pub moments: MomentTrajectory,
    /// `K⁽²⁾` of the unit datum on the same nodes.
    pub second_order: MomentTrajectory,
}

/// Runs `spec` at amplitude `eta` and reports the remainder.
pub fn run_at(
    spec: &DatumSpec,
    grid: Grid,
    sim: &SimConfig,
    e: &Correlation,
    second: &MomentTrajectory,
    eta: f64,
) -> Result<(FlowTrajectory, MomentTrajectory, RemainderReport)> {
    let traj = simulate(&spec.with_eta(eta), grid, sim)?;
    let m = accumulate_k(&traj);
    let report = remainder_report(&m, second, e, eta)?;
    Ok((traj, m, report))
}

/// Chooses `η` for `spec` (its own `η` is ignored) and returns the verified run.
pub fn calibrate(spec: &DatumSpec, grid: Grid, sim: &SimConfig, opts: &CalibrationOptions) -> Result<CalibratedRun> {
    let unit_spec = spec.with_eta(1.0);
    let unit = assemble_spectral(&unit_spec, grid)?;
    let fnorm_unit = fnorm_diag(std::slice::from_ref(&unit), 0.5 * grid.length);
    if !(fnorm_unit > 0.0) {
        return Err(Error::Config("datum vanishes on the grid".into()));
    }
    let eta_start = 0.1 / fnorm_unit;
    let e = Correlation::closed(&unit_spec, crate::correlation::DEFAULT_POINTS)?;
    let quiet = SimConfig {
        snapshot_stride: 0,
        capture_times: Vec::new(),
        check_invariants: false,
        ..sim.clone()
    };

    // Probe, backing off if the flow blows up.
    let mut probe_eta = opts.probe_eta.max(eta_start);
    let (probe, second) = loop {
        match simulate(&spec.with_eta(probe_eta), grid, &quiet) {
            Ok(traj) => {
                let m = accumulate_k(&traj);
                let second = second_order_moments(&unit, &m.times);
                break (remainder_report(&m, &second, &e, probe_eta)?, second);
            }
            Err(Error::Divergence { .. }) if probe_eta > eta_start => probe_eta *= 0.5,
            Err(err) => return Err(err),
        }
    };
    let mut eta = if probe.nonlinear_fraction > 0.0 {
        probe_eta * (opts.target_fraction / probe.nonlinear_fraction).sqrt()
    } else {
        eta_start
    };
    eta = eta.max(eta_start);

    let mut halvings = 0;
    loop {
        let (trajectory, moments, report) = run_at(spec, grid, sim, &e, &second, eta)?;
        if report.bound_ratio <= opts.bound {
            return Ok(CalibratedRun {
                calibration: Calibration {
                    fnorm_unit,
                    eta_start,
                    probe_eta,
                    probe_fraction: probe.nonlinear_fraction,
                    eta,
                    halvings,
                    report,
                },
                trajectory,
                moments,
                second_order: second,
            });
        }
        if halvings == opts.max_halvings {
            return Err(Error::Calibration(format!(
                "remainder ratio {:.3e} > {} after {halvings} halvings (eta = {eta:.3e})",
                report.bound_ratio, opts.bound
            )));
        }
        eta *= 0.5;
        halvings += 1;
    }
}
