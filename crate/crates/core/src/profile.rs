//! Radial Fourier envelope `φ̂` of the datum.
//!
//! A profile is a smooth nonnegative radial function supported in the unit
//! ball, scaled so that `∫_{R^d} φ̂(|ξ|)² dξ = 1/d`.

use crate::error::{Error, Result};
use crate::geometry::Dim;
use crate::quadrature::adaptive;
use std::fmt;
use std::sync::Arc;

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in profile shapes selectable from configuration files.
pub const PROFILE_NAMES: [&str; 2] = ["standard", "quartic"];

#[derive(Clone)]
pub struct BumpProfile {
    name: String,
    raw: RadialFn,
    constant: f64,
    dim: Dim,
}

impl fmt::Debug for BumpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BumpProfile")
            .field("name", &self.name)
            .field("constant", &self.constant)
            .field("dim", &self.dim)
            .finish()
    }
}

/// `exp(−1/(1−r²))` on `r < 1`.
pub fn standard_raw(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `exp(−1/(1−r⁴))` on `r < 1`: flatter top, steeper edge.
pub fn quartic_raw(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r.powi(4))).exp()
    }
}

const NORMALIZATION_TOL: f64 = 1e-15;

/// `|S^{d−1}| ∫₀¹ r^{d−1} f(r)² dr`.
fn radial_l2(raw: &dyn Fn(f64) -> f64, dim: Dim) -> f64 {
    let p = dim.n() as i32 - 1;
    dim.sphere_area() * adaptive(|r| r.powi(p) * raw(r).powi(2), 0.0, 1.0, NORMALIZATION_TOL)
}

/// Scale `raw` so that its square integrates to `1/d` over `R^d`.
pub fn normalize_profile(name: &str, raw: RadialFn, dim: Dim) -> Result<BumpProfile> {
    // Probe a few radii first: a profile that is negative or leaks outside
    // the unit ball can never be made admissible by scaling.
    for i in 0..=64 {
        let r = i as f64 / 64.0;
        let v = raw(r);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidProfile(format!(
                "profile `{name}` is negative or non-finite at r = {r}"
            )));
        }
    }
    if raw(1.0) != 0.0 || raw(1.5) != 0.0 {
        return Err(Error::InvalidProfile(format!(
            "profile `{name}` is not supported in the unit ball"
        )));
    }
    let l2 = radial_l2(raw.as_ref(), dim);
    if !(l2 > 0.0) {
        return Err(Error::InvalidProfile(format!("profile `{name}` is identically zero")));
    }
    let constant = (1.0 / (dim.as_f64() * l2)).sqrt();
    Ok(BumpProfile {
        name: name.to_string(),
        raw,
        constant,
        dim,
    })
}

impl BumpProfile {
    /// One of the built-in shapes listed in [`PROFILE_NAMES`].
    pub fn named(name: &str, dim: Dim) -> Result<Self> {
        let raw: RadialFn = match name {
            "standard" => Arc::new(standard_raw),
            "quartic" => Arc::new(quartic_raw),
            other => {
                return Err(Error::InvalidProfile(format!(
                    "unknown profile `{other}` (expected one of {PROFILE_NAMES:?})"
                )))
            }
        };
        normalize_profile(name, raw, dim)
    }

    pub fn standard(dim: Dim) -> Self {
        Self::named("standard", dim).expect("built-in profile is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn normalization_constant(&self) -> f64 {
        self.constant
    }

    /// Normalized value `φ̂(r)`; exactly zero for `r ≥ 1`.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else {
            self.constant * (self.raw)(r)
        }
    }

    /// Dilated profile `φ̂^δ(ξ) = φ̂(|ξ|/δ)/δ^{d/2}` at distance `dist` from the bump center.
    #[inline]
    pub fn dilated(&self, dist: f64, delta: f64) -> f64 {
        self.value(dist / delta) / delta.powf(0.5 * self.dim.as_f64())
    }

    /// Same shape in another dimension (renormalized).
    pub fn in_dim(&self, dim: Dim) -> Result<Self> {
        normalize_profile(&self.name, self.raw.clone(), dim)
    }

    /// `∫_{R^d} φ̂² dξ`, recomputed by radial quadrature.
    pub fn l2_norm_squared(&self) -> f64 {
        let c = self.constant;
        let raw = self.raw.clone();
        radial_l2(&move |r| c * raw(r), self.dim)
    }
}
