//! The heat correlation `E(a)(t) = −∫₀ᵗ ∫ e^{sΔ}a₁ e^{sΔ}a₂ dx ds`.
//!
//! In Fourier variables the time integral is explicit:
//!
//! `E(a)(t) = (2π)^{−d} ∫ (1 − e^{−2t|ξ|²})/(2|ξ|²) · p(ξ) dξ`,
//! `p(ξ) = −Re(â₁(ξ) conj â₂(ξ))`.
//!
//! Three evaluators share this structure: a reduced rule that integrates
//! over a single bump per term (valid for disjoint supports), a full rule
//! covering all supports (valid for any `δ`), and a lattice oracle that
//! sums over `(2π/L)Z^d` and integrates in time with Simpson's rule.

use crate::design::{eval_eapp, DesignSolution};
use crate::error::{Error, Result};
use crate::fields::{default_cover, lattice_support, support_cover, DatumSpec, MIN_POINTS_PER_DELTA};
use crate::geometry::{self, Dim, Vec3};
use crate::profile::BumpProfile;
use crate::quadrature::{simpson_weights, GaussRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default Gauss–Legendre points per axis on each bump box.
pub const DEFAULT_POINTS: usize = 48;
/// Minimum accepted points per axis.
pub const MIN_POINTS: usize = 8;
/// Default number of Simpson subintervals in the oracle.
pub const DEFAULT_TIME_STEPS: usize = 256;
/// Default samples per interval before bisection.
pub const DEFAULT_SCAN_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Closed,
    Full,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub method: Method,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Precomputed `(|ξ|², weight·p(ξ))` pairs; `E(t) = (2π)^{−d} Σ W (1−e^{−2tq})/(2q)`.
#[derive(Debug, Clone)]
pub struct Correlation {
    dim: Dim,
    q: Vec<f64>,
    w: Vec<f64>,
    normalization: f64,
}

/// Symmetrized cross term of one bump: the sum of `−Re(â₁ conj â₂)/ψ̂²` over the
/// `d` rotated copies of a point near `α`. Equals `ξ₁ξ₂·d` in the plane
/// (all copies agree) and `(3|ξ|² − (Σξ)²)/2` in space.
fn reduced_cross(dim: Dim, xi: Vec3) -> f64 {
    match dim {
        Dim::Two => 2.0 * xi[0] * xi[1],
        Dim::Three => {
            let s = xi[0] + xi[1] + xi[2];
            0.5 * (3.0 * geometry::norm2(xi) - s * s)
        }
    }
}

impl Correlation {
    /// Reduced rule: the `2d` bumps of a term contribute equally in pairs
    /// `±c`, and the `d` rotated copies fold into [`reduced_cross`], so each
    /// term is `2λ_j²η²` times an integral over the single ball `B(α_j, δ)`.
    pub fn closed(spec: &DatumSpec, points: usize) -> Result<Self> {
        if points < MIN_POINTS {
            return Err(Error::under_resolved(
                "quadrature points",
                format!("{points} per axis is below the minimum {MIN_POINTS}"),
            ));
        }
        let rule = GaussRule::new(points)?;
        let mut q = Vec::new();
        let mut w = Vec::new();
        for t in &spec.terms {
            let amp = 2.0 * (t.lambda * spec.eta).powi(2);
            if amp == 0.0 {
                continue;
            }
            for (xi, wt) in rule.tensor_box(spec.dim, t.alpha, spec.delta) {
                let phi = spec.profile.dilated(geometry::norm(geometry::sub(xi, t.alpha)), spec.delta);
                if phi == 0.0 {
                    continue;
                }
                q.push(geometry::norm2(xi));
                w.push(wt * amp * reduced_cross(spec.dim, xi) * phi * phi);
            }
        }
        Ok(Self::from_parts(spec.dim, q, w))
    }

    /// Full rule over the union of all supports; needs no disjointness.
    pub fn full(spec: &DatumSpec, cells_per_delta: usize, points: usize) -> Result<Self> {
        let nodes = support_cover(spec, cells_per_delta, points)?;
        let (q, w): (Vec<f64>, Vec<f64>) = nodes
            .par_iter()
            .filter_map(|&(xi, wt)| {
                let a = spec.datum_hat(xi);
                let p = -(a[0] * a[1].conj()).re;
                (p != 0.0).then(|| (geometry::norm2(xi), wt * p))
            })
            .unzip();
        Ok(Self::from_parts(spec.dim, q, w))
    }

    pub fn full_default(spec: &DatumSpec) -> Result<Self> {
        let (c, p) = default_cover(spec.dim);
        Self::full(spec, c, p)
    }

    fn from_parts(dim: Dim, q: Vec<f64>, w: Vec<f64>) -> Self {
        Self {
            dim,
            q,
            w,
            normalization: (2.0 * PI).powi(-(dim.n() as i32)),
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.q.len()
    }

    pub fn value(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.normalization
            * self
                .q
                .iter()
                .zip(&self.w)
                .map(|(&q, &w)| w * -(-2.0 * t * q).exp_m1() / (2.0 * q))
                .sum::<f64>()
    }

    /// `dE/dt = (2π)^{−d} Σ W e^{−2tq}`.
    pub fn derivative(&self, t: f64) -> f64 {
        self.normalization * self.q.iter().zip(&self.w).map(|(&q, &w)| w * (-2.0 * t * q).exp()).sum::<f64>()
    }

    pub fn curve(&self, method: Method, times: &[f64]) -> CorrelationCurve {
        CorrelationCurve {
            method,
            times: times.to_vec(),
            values: times.iter().map(|&t| self.value(t)).collect(),
        }
    }
}

/// `E(a)(t)` by the reduced bump rule.
pub fn eval_e_closed(spec: &DatumSpec, t: f64, points: usize) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("negative time {t}")));
    }
    Ok(Correlation::closed(spec, points)?.value(t))
}

/// Lattice oracle: Plancherel sums over `(2π/L)Z^d` at Simpson nodes in time.
#[derive(Debug, Clone)]
pub struct LatticeOracle {
    q: Vec<f64>,
    p: Vec<f64>,
    normalization: f64,
    time_steps: usize,
}

impl LatticeOracle {
    pub fn new(spec: &DatumSpec, length: f64, time_steps: usize) -> Result<Self> {
        let dk = 2.0 * PI / length;
        if dk > spec.delta / MIN_POINTS_PER_DELTA {
            return Err(Error::under_resolved(
                "L",
                format!("oracle lattice spacing {dk:.4} does not resolve delta = {}", spec.delta),
            ));
        }
        if time_steps < 2 {
            return Err(Error::under_resolved("time steps", "need at least 2 Simpson subintervals"));
        }
        let pts = lattice_support(spec, dk);
        let (q, p) = pts
            .iter()
            .filter_map(|pt| {
                let p = -(pt.value[0] * pt.value[1].conj()).re;
                (p != 0.0).then(|| (geometry::norm2(pt.k), p))
            })
            .unzip();
        Ok(Self {
            q,
            p,
            normalization: length.powi(-(spec.dim.n() as i32)),
            time_steps,
        })
    }

    /// `∫ e^{sΔ}a₁ e^{sΔ}a₂ dx`, negated.
    pub fn integrand(&self, s: f64) -> f64 {
        self.normalization * self.q.iter().zip(&self.p).map(|(&q, &p)| p * (-2.0 * s * q).exp()).sum::<f64>()
    }

    pub fn value(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let m = self.time_steps;
        let h = t / m as f64;
        let w = simpson_weights(m, h);
        // Collected first so the summation order does not depend on scheduling.
        let terms: Vec<f64> = (0..=m).into_par_iter().map(|i| w[i] * self.integrand(i as f64 * h)).collect();
        terms.iter().sum()
    }
}

/// `E(a)(t)` by the lattice oracle with box length `L` and `m` Simpson steps.
pub fn eval_e_oracle(spec: &DatumSpec, t: f64, time_steps: usize, length: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("negative time {t}")));
    }
    Ok(LatticeOracle::new(spec, length, time_steps)?.value(t))
}

/// The `δ → 0` limit of `E(a^δ)(t)` with the `(2π)^{−d}` factor included.
pub fn e_limit(spec: &DatumSpec, t: f64) -> f64 {
    let norm = (2.0 * PI).powi(-(spec.dim.n() as i32));
    let dim = spec.dim;
    norm * spec
        .terms
        .iter()
        .map(|term| {
            let a = term.alpha;
            let a2 = geometry::norm2(a);
            let decay = -(-2.0 * t * a2).exp_m1();
            let shape = match dim {
                Dim::Two => a[0] * a[1] / a2,
                Dim::Three => reduced_cross(dim, a) / (3.0 * a2),
            };
            (term.lambda * spec.eta).powi(2) * decay * shape
        })
        .sum::<f64>()
}

/// A bracket `[lo, hi]` on which the function changes sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Crossing {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Uniform scan with `samples` subintervals followed by bisection down to `tol`.
pub fn find_sign_changes(f: impl Fn(f64) -> f64, a: f64, b: f64, samples: usize, tol: f64) -> Vec<Crossing> {
    let samples = samples.max(1);
    let xs: Vec<f64> = (0..=samples).map(|i| a + (b - a) * i as f64 / samples as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut brackets = Vec::new();
    let mut i = 0;
    while i < samples {
        let (s0, s1) = (sgn(vs[i]), sgn(vs[i + 1]));
        if s0 * s1 < 0 {
            brackets.push((i, i + 1));
        } else if s1 == 0 && i + 2 <= samples && s0 * sgn(vs[i + 2]) < 0 {
            brackets.push((i, i + 2));
            i += 1;
        }
        i += 1;
    }
    brackets
        .into_iter()
        .map(|(i, j)| {
            let (mut lo, mut hi, mut flo, mut fhi) = (xs[i], xs[j], vs[i], vs[j]);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    return Crossing { lo: mid, hi: mid, f_lo: 0.0, f_hi: 0.0 };
                }
                if sgn(fm) == sgn(flo) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                    fhi = fm;
                }
            }
            Crossing { lo, hi, f_lo: flo, f_hi: fhi }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub delta: f64,
    pub admissible: bool,
    pub reason: Option<String>,
    /// `sup_t |E(a^δ)(t) − (2π)^{−d} E^app(t)|`.
    pub deviation: f64,
    /// `sup_t |E(a^δ)(t) − lim_{δ→0} E(a^δ)(t)|`.
    pub deviation_from_limit: f64,
}

/// `sup_t |E(a^δ) − E^app|` over `times` for each `δ`; inadmissible `δ`
/// are flagged and evaluated with the full (overlap-safe) rule.
pub fn delta_sweep(design: &DesignSolution, deltas: &[f64], times: &[f64], profile: &BumpProfile) -> Result<Vec<SweepEntry>> {
    let norm = (2.0 * PI).powi(-(design.dimension.n() as i32));
    deltas
        .iter()
        .map(|&delta| {
            let spec = DatumSpec::new_unchecked(design.dimension, delta, 1.0, design.terms(), profile.clone())?;
            let check = spec.validate();
            let corr = match check {
                Ok(()) => Correlation::closed(&spec, DEFAULT_POINTS)?,
                Err(_) => Correlation::full_default(&spec)?,
            };
            let mut dev = 0.0_f64;
            let mut dev_lim = 0.0_f64;
            for &t in times {
                let e = corr.value(t);
                dev = dev.max((e - norm * eval_eapp(&design.mu, design.gamma, t)).abs());
                dev_lim = dev_lim.max((e - e_limit(&spec, t)).abs());
            }
            Ok(SweepEntry {
                delta,
                admissible: check.is_ok(),
                reason: check.err().map(|e| e.to_string()),
                deviation: dev,
                deviation_from_limit: dev_lim,
            })
        })
        .collect()
}
