//! Moment matrix `K(t) = ∫₀ᵗ ∫ u⊗u dx ds`, its off-diagonal zeros, and the
//! weighted sup-norm diagnostic of the mild formulation.

use super::{simulate_from, FlowTrajectory, SimConfig};
use crate::error::{Error, Result};
use crate::fields::{FieldFft, SpectralField};
use crate::geometry::{self, Dim, Mat3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub dim: Dim,
    pub times: Vec<f64>,
    pub k: Vec<Mat3>,
    /// Spatial moments `∫u⊗u dx` at each sample (the integrand of `K`).
    pub moments: Vec<Mat3>,
    pub rule: String,
}

impl MomentTrajectory {
    pub fn k12(&self) -> Vec<f64> {
        self.k.iter().map(|m| m[0][1]).collect()
    }

    /// Interpolation consistent with the trapezoid rule: on each interval
    /// the moments are linear, so `K` is the quadratic through both ends.
    pub fn at(&self, t: f64) -> Mat3 {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.k[0];
        }
        if i >= self.times.len() {
            return *self.k.last().unwrap();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (h, s) = (t1 - t0, t - t0);
        let (m0, m1) = (&self.moments[i - 1], &self.moments[i]);
        let mut out = self.k[i - 1];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] += s * m0[r][c] + s * s / (2.0 * h) * (m1[r][c] - m0[r][c]);
            }
        }
        out
    }

    /// Worst relative spread among diagonal entries and among off-diagonal
    /// entries, over all times.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim.n();
        let mut worst = 0.0_f64;
        for m in &self.k {
            let scale = geometry::mat_max_abs(m, self.dim);
            if scale == 0.0 {
                continue;
            }
            let diag: Vec<f64> = (0..d).map(|i| m[i][i]).collect();
            let off: Vec<f64> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).map(|(i, j)| m[i][j]).collect();
            let spread = |v: &[f64]| {
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            };
            worst = worst.max(spread(&diag) / scale).max(spread(&off) / scale);
        }
        worst
    }

    pub fn diagonal_nondecreasing(&self) -> bool {
        let d = self.dim.n();
        self.k.windows(2).all(|w| (0..d).all(|i| w[1][i][i] >= w[0][i][i]))
    }
}

/// Cumulative trapezoid of spatial moments sampled at `times`, starting from `k0`.
pub fn accumulate_k_from(dim: Dim, times: &[f64], moments: &[Mat3], k0: Mat3) -> MomentTrajectory {
    let mut k = Vec::with_capacity(times.len());
    let mut acc = k0;
    k.push(acc);
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        for r in 0..3 {
            for c in 0..3 {
                acc[r][c] += 0.5 * h * (moments[i - 1][r][c] + moments[i][r][c]);
            }
        }
        k.push(acc);
    }
    MomentTrajectory {
        dim,
        times: times.to_vec(),
        k,
        moments: moments.to_vec(),
        rule: "trapezoid".into(),
    }
}

pub fn accumulate_k(traj: &FlowTrajectory) -> MomentTrajectory {
    let moments: Vec<Mat3> = traj.records.iter().map(|r| r.moments).collect();
    accumulate_k_from(traj.grid.dim, &traj.times(), &moments, [[0.0; 3]; 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroBracket {
    pub lo: f64,
    pub hi: f64,
    pub k12_lo: f64,
    pub k12_hi: f64,
    /// Root of the interpolated `K₁₂` inside the bracket.
    pub t_star: f64,
    /// `K` interpolated at `t_star`.
    pub k_star: Mat3,
    /// Number of sign changes found in the search interval.
    pub crossings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZeroSearch {
    Found(ZeroBracket),
    NotFound { min: f64, max: f64 },
}

impl ZeroSearch {
    pub fn found(&self) -> Option<&ZeroBracket> {
        match self {
            ZeroSearch::Found(b) => Some(b),
            ZeroSearch::NotFound { .. } => None,
        }
    }
}

/// First sign change of `K₁₂` between consecutive samples in `[a, b]`.
pub fn find_zero_k12(m: &MomentTrajectory, a: f64, b: f64) -> ZeroSearch {
    let idx: Vec<usize> = (0..m.times.len()).filter(|&i| m.times[i] >= a && m.times[i] <= b).collect();
    let k12 = |i: usize| m.k[i][0][1];
    let mut first = None;
    let mut count = 0;
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if k12(i) * k12(j) < 0.0 || (k12(j) == 0.0 && k12(i) != 0.0) {
            count += 1;
            if first.is_none() {
                first = Some((i, j));
            }
        }
    }
    match first {
        Some((i, j)) => {
            let (lo, hi, flo, fhi) = (m.times[i], m.times[j], k12(i), k12(j));
            let t_star = lo + interval_root(flo, m.moments[i][0][1], m.moments[j][0][1], hi - lo);
            ZeroSearch::Found(ZeroBracket {
                lo,
                hi,
                k12_lo: flo,
                k12_hi: fhi,
                t_star,
                k_star: m.at(t_star),
                crossings: count,
            })
        }
        None => {
            let vals = idx.iter().map(|&i| k12(i));
            ZeroSearch::NotFound {
                min: vals.clone().fold(f64::INFINITY, f64::min),
                max: vals.fold(f64::NEG_INFINITY, f64::max),
            }
        }
    }
}

/// Root in `[0, h]` of `a + b·s + (c − b)/(2h)·s²`, which takes the value
/// `a` at 0 and the trapezoid update at `h`.
fn interval_root(a: f64, b: f64, c: f64, h: f64) -> f64 {
    let q = (c - b) / (2.0 * h);
    let end = a + h * (b + c) / 2.0;
    let linear = h * a / (a - end);
    if q.abs() * h * h <= 1e-14 * (a.abs() + (b * h).abs()) {
        return if b != 0.0 { (-a / b).clamp(0.0, h) } else { linear };
    }
    let disc = b * b - 4.0 * q * a;
    if disc < 0.0 {
        return linear;
    }
    // Numerically stable pair of roots.
    let sq = disc.sqrt();
    let w = -0.5 * (b + b.signum() * sq);
    let roots = [if w != 0.0 { a / w } else { f64::NAN }, if q != 0.0 { w / q } else { f64::NAN }];
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r >= -1e-12 * h && *r <= h * (1.0 + 1e-12))
        .min_by(|x, y| (x - linear).abs().total_cmp(&(y - linear).abs()))
        .unwrap_or(linear)
        .clamp(0.0, h)
}

/// Re-simulates from the last snapshot before the bracket with step
/// `dt / refine` and returns the narrower bracket.
pub fn refine_zero(traj: &FlowTrajectory, m: &MomentTrajectory, bracket: &ZeroBracket, refine: usize) -> Result<ZeroBracket> {
    let start = traj
        .snapshots
        .iter()
        .filter(|s| s.time <= bracket.lo + 1e-12)
        .last()
        .ok_or_else(|| Error::Config("no snapshot precedes the bracket".into()))?;
    let k0 = m.at(start.time);
    let mut cfg = SimConfig::new(traj.dt / refine.max(1) as f64, bracket.hi - start.time);
    cfg.check_invariants = false;
    let fine = simulate_from(start.clone(), &cfg)?;
    let moments: Vec<Mat3> = fine.records.iter().map(|r| r.moments).collect();
    let mt = accumulate_k_from(traj.grid.dim, &fine.times(), &moments, k0);
    match find_zero_k12(&mt, bracket.lo - 1e-12, bracket.hi + 1e-12) {
        ZeroSearch::Found(b) => Ok(b),
        ZeroSearch::NotFound { min, max } => Err(Error::Config(format!(
            "refinement lost the sign change (K12 in [{min:.3e}, {max:.3e}])"
        ))),
    }
}

/// Whether `K` is proportional to the identity within `tol · |K|_max`.
pub fn is_isotropic(k: &Mat3, dim: Dim, tol: f64) -> bool {
    let d = dim.n();
    let scale = geometry::mat_max_abs(k, dim);
    let mean = geometry::trace(k, dim) / d as f64;
    let mut dev = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { mean } else { 0.0 };
            dev = dev.max((k[i][j] - target).abs());
        }
    }
    dev <= tol * scale
}

/// `sup (1+|x|)^{d+1}|u| + sup (1+t)^{(d+1)/2}|u|` over the given fields,
/// with `|x|` restricted to `radius` (centered box coordinates).
pub fn fnorm_diag(fields: &[SpectralField], radius: f64) -> f64 {
    let Some(first) = fields.first() else {
        return 0.0;
    };
    let g = first.grid;
    let fft = FieldFft::new(g.dim, g.n);
    let p = g.dim.n() as i32 + 1;
    let (mut space, mut time) = (0.0_f64, 0.0_f64);
    for f in fields {
        let x = f.to_physical(&fft);
        for i in 0..g.len() {
            let mag = x.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt();
            let r = geometry::norm(g.position(i));
            if r <= radius {
                space = space.max((1.0 + r).powi(p) * mag);
            }
            time = time.max((1.0 + f.time).powf(0.5 * p as f64) * mag);
        }
    }
    space + time
}

/// [`fnorm_diag`] of the heat flow of `datum` sampled at `times`.
pub fn heat_flow_fnorm(datum: &SpectralField, times: &[f64], radius: f64) -> Result<f64> {
    let fields = times
        .iter()
        .map(|&t| super::heat(datum, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(fnorm_diag(&fields, radius))
}
