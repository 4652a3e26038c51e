//! Heat flow of slowly decaying three-dimensional data: the plain datum
//! `ȧ = η(−∂₂, ∂₁, 0) log(e+|x|²)^{−1}` and the chirped datum
//! `ā = ȧ·sin(|x|²)`.
//!
//! Both have the form `η·g(|x|)·(x₂, −x₁, 0)`. Such a field is `(∂₂, −∂₁, 0)`
//! of a radial potential, so its heat flow has the same form with
//! `g` replaced by `Φ(r)/r`, where `Φ` is a one-dimensional kernel integral
//! of `s·g(s)`. This makes pointwise evaluation accurate far out along a
//! ray, where a three-dimensional quadrature could not resolve the chirp.
//! A direct tensor-product evaluator is provided as well and used as a
//! cross-check near the origin.

use crate::error::{Error, Result};
use crate::farfield::{fit_decay_exponent, DecayFit};
use crate::geometry::{self, Vec3};
use crate::quadrature::GaussRule;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

/// Kernel truncation radius in units of `√t` (Gaussian tail `e^{−36}`).
pub const RADIUS_FACTOR: f64 = 12.0;
/// Minimum quadrature points per local oscillation wavelength.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 4.0;
const PANEL_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KatoKind {
    Plain,
    Modulated,
}

impl std::str::FromStr for KatoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(KatoKind::Plain),
            "modulated" => Ok(KatoKind::Modulated),
            _ => Err(Error::Config(format!("unknown datum kind '{s}' (plain | modulated)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoDatum {
    pub kind: KatoKind,
    pub eta: f64,
}

/// `s ↦ g(s)` with `a(x) = η g(|x|) (x₂, −x₁, 0)`.
fn radial_g(kind: KatoKind, s: f64) -> f64 {
    let q = E + s * s;
    let l = q.ln();
    let g = 2.0 / (q * l * l);
    match kind {
        KatoKind::Plain => g,
        KatoKind::Modulated => g * chirp(s),
    }
}

/// `sin(s²)` without the phase error `ε·s²` of a rounded square: `s²` is
/// split exactly as `hi + lo`.
fn chirp(s: f64) -> f64 {
    let hi = s * s;
    let lo = s.mul_add(s, -hi);
    hi.sin() + lo * hi.cos()
}

/// `∫_{−1}^{1} μ e^{−(r²+s²−2rsμ)/4t} dμ`, stable for all `r, s ≥ 0`.
fn angular_kernel(r: f64, s: f64, t: f64) -> f64 {
    let a = r * s / (2.0 * t);
    if a < 1e-3 {
        let base = (-(r * r + s * s) / (4.0 * t)).exp();
        return base * (2.0 * a / 3.0 + a.powi(3) / 15.0 + a.powi(5) / 420.0);
    }
    let near = (-(r - s).powi(2) / (4.0 * t)).exp();
    let far = (-(r + s).powi(2) / (4.0 * t)).exp();
    (near * (a - 1.0) + far * (a + 1.0)) / (a * a)
}

/// Heat-flow value with an estimate of the floating-point noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatValue {
    pub value: Vec3,
    /// Magnitudes at or below this are indistinguishable from rounding.
    pub floor: f64,
}

impl HeatValue {
    pub fn magnitude(&self) -> f64 {
        geometry::norm(self.value)
    }

    pub fn resolved(&self) -> bool {
        self.magnitude() > self.floor
    }
}

impl KatoDatum {
    pub fn new(kind: KatoKind, eta: f64) -> Self {
        Self { kind, eta }
    }

    pub fn eval(&self, x: Vec3) -> Vec3 {
        let g = self.eta * radial_g(self.kind, geometry::norm(x));
        [g * x[1], -g * x[0], 0.0]
    }

    /// Local wavelength of the modulation at radius `r` (infinite for the plain datum).
    pub fn wavelength(&self, r: f64) -> f64 {
        match self.kind {
            KatoKind::Plain => f64::INFINITY,
            KatoKind::Modulated => PI / r.max(1.0),
        }
    }

    /// `Φ(r) = ∫ G_t(x−y)·s g(s)·(ŷ·x̂) dy` and its noise floor, `|x| = r`.
    fn radial_flux(&self, r: f64, t: f64) -> (f64, f64) {
        let big_r = RADIUS_FACTOR * t.sqrt();
        let (lo, hi) = ((r - big_r).max(0.0), r + big_r);
        let width = (0.5 * t.sqrt()).min(0.5 * self.wavelength(hi));
        let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
        let rule = GaussRule::new(PANEL_POINTS).expect("fixed rule");
        let c = 2.0 * PI * (4.0 * PI * t).powf(-1.5);
        let (mut sum, mut abs) = (0.0, 0.0);
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (s, w) in rule.on(a, a + h) {
                let v = w * s * s * s * radial_g(self.kind, s) * angular_kernel(r, s, t);
                sum += v;
                abs += v.abs();
            }
        }
        // Node positions carry a relative rounding error ε, which moves the
        // chirp phase by about 2ε·s².
        let sensitivity = match self.kind {
            KatoKind::Plain => 64.0,
            KatoKind::Modulated => 64.0 + 4.0 * hi * hi,
        };
        (c * sum, sensitivity * f64::EPSILON * c * abs)
    }

    /// `e^{tΔ}a(x)` via the radial reduction.
    pub fn heat(&self, x: Vec3, t: f64) -> Result<HeatValue> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("heat time must be positive, got {t}")));
        }
        let r = geometry::norm(x);
        if r == 0.0 {
            return Ok(HeatValue { value: [0.0; 3], floor: 0.0 });
        }
        let (phi, floor) = self.radial_flux(r, t);
        let g = self.eta * phi / r;
        let rho = x[0].hypot(x[1]);
        Ok(HeatValue {
            value: [g * x[1], -g * x[0], 0.0],
            floor: self.eta.abs() * floor / r * rho,
        })
    }

    /// `e^{tΔ}a(x) − a(x)`.
    pub fn heat_difference(&self, x: Vec3, t: f64) -> Result<HeatValue> {
        let h = self.heat(x, t)?;
        let a = self.eval(x);
        Ok(HeatValue {
            value: geometry::sub(h.value, a),
            floor: h.floor + 4.0 * f64::EPSILON * geometry::norm(a),
        })
    }
}

/// Options for [`heat_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatPointOptions {
    /// Truncation radius; `None` means `RADIUS_FACTOR·√t`.
    pub radius: Option<f64>,
    pub points_per_axis: usize,
    /// Shortest oscillation wavelength of the datum inside the kernel support.
    pub wavelength: Option<f64>,
}

impl Default for HeatPointOptions {
    fn default() -> Self {
        Self {
            radius: None,
            points_per_axis: 64,
            wavelength: None,
        }
    }
}

/// `(4πt)^{−3/2}∫_{|y−x|_∞ ≤ R} e^{−|y−x|²/4t} a(y) dy` by a composite
/// tensor-product Gauss–Legendre rule centered at `x`.
pub fn heat_point(datum: impl Fn(Vec3) -> Vec3 + Sync, x: Vec3, t: f64, opts: &HeatPointOptions) -> Result<Vec3> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat time must be positive, got {t}")));
    }
    let big_r = opts.radius.unwrap_or(RADIUS_FACTOR * t.sqrt());
    if big_r < 8.0 * t.sqrt() {
        return Err(Error::Domain(format!("truncation radius {big_r} is below 8·√t")));
    }
    let panels = opts.points_per_axis.div_ceil(PANEL_POINTS).max(1);
    let n = panels * PANEL_POINTS;
    if let Some(lambda) = opts.wavelength {
        let per_wave = n as f64 * lambda / (2.0 * big_r);
        if per_wave < MIN_POINTS_PER_WAVELENGTH {
            return Err(Error::under_resolved(
                "points per axis",
                format!("{per_wave:.2} points per oscillation wavelength; need {MIN_POINTS_PER_WAVELENGTH}"),
            ));
        }
    }
    let rule = GaussRule::new(PANEL_POINTS)?;
    let axis = rule.composite(-big_r, big_r, panels);
    let c = (4.0 * PI * t).powf(-1.5);
    let total = axis
        .par_iter()
        .map(|&(u, wu)| {
            let mut acc = [0.0; 3];
            for &(v, wv) in &axis {
                for &(w, ww) in &axis {
                    let k = wu * wv * ww * (-(u * u + v * v + w * w) / (4.0 * t)).exp();
                    if k == 0.0 {
                        continue;
                    }
                    let a = datum([x[0] + u, x[1] + v, x[2] + w]);
                    for m in 0..3 {
                        acc[m] += k * a[m];
                    }
                }
            }
            acc
        })
        .collect::<Vec<Vec3>>()
        .into_iter()
        .fold([0.0; 3], geometry::add);
    Ok(geometry::scale(total, c))
}

/// Decay fit of a heat-flow quantity along `omega`, noise-floor samples excluded.
fn fit_heat(eval: impl Fn(Vec3) -> Result<HeatValue> + Sync, omega: Vec3, radii: &[f64]) -> Result<DecayFit> {
    let values: Vec<HeatValue> = radii
        .par_iter()
        .map(|&r| eval(geometry::scale(omega, r)))
        .collect::<Result<_>>()?;
    let lookup = |x: Vec3| {
        let r = geometry::norm(x);
        let i = radii.iter().position(|&q| (q - r).abs() <= 1e-9 * q).expect("sample radius");
        let v = values[i];
        Ok(if v.resolved() { v.value } else { [0.0; 3] })
    };
    fit_decay_exponent(lookup, omega, radii, 0.0)
}

/// Slope of `|e^{tΔ}a|` along a ray. Fails when fewer than two samples
/// rise above the rounding floor.
pub fn measure_heat_decay(datum: &KatoDatum, t: f64, omega: Vec3, radii: &[f64]) -> Result<DecayFit> {
    fit_heat(|x| datum.heat(x, t), omega, radii)
}

/// Slope of `|e^{tΔ}a − a|` along a ray.
pub fn measure_difference_decay(datum: &KatoDatum, t: f64, omega: Vec3, radii: &[f64]) -> Result<DecayFit> {
    fit_heat(|x| datum.heat_difference(x, t), omega, radii)
}

/// Slope of `|e^{tΔ}a|·log²|x|`, which removes the logarithmic factor of
/// the plain datum's `|x|^{−1}log^{−2}|x|` tail.
pub fn measure_log_corrected_decay(datum: &KatoDatum, t: f64, omega: Vec3, radii: &[f64]) -> Result<DecayFit> {
    fit_heat(
        |x| {
            let l = geometry::norm(x).ln();
            datum.heat(x, t).map(|h| HeatValue {
                value: geometry::scale(h.value, l * l),
                floor: h.floor * l * l,
            })
        },
        omega,
        radii,
    )
}

/// Heat-flow samples along a ray.
pub fn ray_samples(datum: &KatoDatum, t: f64, omega: Vec3, radii: &[f64]) -> Result<Vec<HeatValue>> {
    radii.par_iter().map(|&r| datum.heat(geometry::scale(omega, r), t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialNorms {
    pub q: f64,
    pub radii: Vec<f64>,
    /// `∫_{|x|≤R}|e^{tΔ}a|^q dx` for each radius.
    pub values: Vec<f64>,
}

impl PartialNorms {
    /// `(N(R_last) − N(R_prev)) / N(R_last)`.
    pub fn last_increment_ratio(&self) -> f64 {
        match self.values.as_slice() {
            [.., a, b] if *b != 0.0 => (b - a) / b,
            _ => 0.0,
        }
    }
}

/// `∫_{S²} sin^q θ dΩ`.
fn angular_factor(q: f64) -> f64 {
    let rule = GaussRule::new(48).expect("fixed rule");
    2.0 * PI * rule.integrate(0.0, PI, |th| th.sin().powf(q + 1.0))
}

/// Partial `L^q` integrals of the heat flow over balls of the given radii.
pub fn lq_trend(datum: &KatoDatum, t: f64, q: f64, radii: &[f64]) -> Result<PartialNorms> {
    if !(1.0..3.0).contains(&q) {
        return Err(Error::Domain(format!("q must lie in [1, 3), got {q}")));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().is_some_and(|&r| !(r > 0.0)) {
        return Err(Error::Domain("radii must be positive and increasing".into()));
    }
    // Panel breakpoints: fine near the origin, then geometric growth, with
    // every requested radius a breakpoint.
    let mut breaks = vec![0.0];
    let last = radii.last().copied().unwrap_or(0.0);
    let mut r = 0.0;
    while r < last {
        let step = if r < 20.0 { 0.25 } else { 0.1 * r };
        let mut next = r + step;
        if let Some(&rad) = radii.iter().find(|&&rad| rad > r + 1e-12 && rad < next) {
            next = rad;
        }
        r = next.min(last);
        breaks.push(r);
    }
    for &rad in radii {
        if !breaks.iter().any(|&b| (b - rad).abs() < 1e-12) {
            breaks.push(rad);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let rule = GaussRule::new(8)?;
    let ang = angular_factor(q);
    let pieces: Vec<f64> = breaks
        .par_windows(2)
        .map(|w| {
            rule.on(w[0], w[1])
                .map(|(s, wt)| {
                    let (phi, floor) = datum.radial_flux(s, t);
                    let phi = if phi.abs() > floor { phi } else { 0.0 };
                    wt * s * s * (datum.eta * phi).abs().powf(q)
                })
                .sum::<f64>()
        })
        .collect();
    let mut values = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut j = 0;
    for (i, w) in breaks.windows(2).enumerate() {
        acc += pieces[i];
        while j < radii.len() && (radii[j] - w[1]).abs() < 1e-12 {
            values.push(ang * acc);
            j += 1;
        }
    }
    Ok(PartialNorms {
        q,
        radii: radii.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAY: Vec3 = [0.48, 0.64, 0.6];

    #[test]
    fn datum_structure() {
        for kind in [KatoKind::Plain, KatoKind::Modulated] {
            let d = KatoDatum::new(kind, 1.0);
            assert_eq!(d.eval([0.0; 3]), [0.0; 3]);
            assert_eq!(d.eval([0.3, -2.0, 5.0])[2], 0.0);
            // Central-difference divergence.
            let x = [0.7, -1.1, 0.4];
            let h = 1e-5;
            let div: f64 = (0..3)
                .map(|j| {
                    let mut p = x;
                    let mut m = x;
                    p[j] += h;
                    m[j] -= h;
                    (d.eval(p)[j] - d.eval(m)[j]) / (2.0 * h)
                })
                .sum();
            assert!(div.abs() < 1e-8, "{kind:?}: {div}");
        }
        // First component against −∂₂ log(e+|x|²)^{−1} by finite differences.
        let f = |x: Vec3| 1.0 / (E + geometry::norm2(x)).ln();
        let x = [1.3, 0.2, -0.7];
        let h = 1e-5;
        let d2 = (f([x[0], x[1] + h, x[2]]) - f([x[0], x[1] - h, x[2]])) / (2.0 * h);
        assert!((KatoDatum::new(KatoKind::Plain, 1.0).eval(x)[0] + d2).abs() < 1e-9);
    }

    #[test]
    fn plain_envelope_bounds() {
        let d = KatoDatum::new(KatoKind::Plain, 1.0);
        let w = geometry::scale(RAY, 1.0 / geometry::norm(RAY));
        let vals: Vec<f64> = [1e2, 3e2, 1e3, 3e3, 1e4]
            .iter()
            .map(|&r| geometry::norm(d.eval(geometry::scale(w, r))) * r * r.ln().powi(2))
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo > 0.1 && hi < 2.0, "{vals:?}");
    }

    #[test]
    fn tensor_rule_preserves_constants_and_gaussians() {
        let opts = HeatPointOptions { points_per_axis: 96, ..Default::default() };
        let c = heat_point(|_| [1.0, -2.0, 0.5], [3.0, 1.0, 0.0], 0.7, &opts).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-13 && (c[1] + 2.0).abs() < 1e-13 && (c[2] - 0.5).abs() < 1e-13);
        // Gaussian of variance σ² spreads to σ² + 2t.
        let s2 = 0.8;
        let t = 0.3;
        let x = [0.4, -0.3, 0.9];
        let g = heat_point(|y| [(-geometry::norm2(y) / (2.0 * s2)).exp(), 0.0, 0.0], x, t, &opts).unwrap();
        let v = s2 + 2.0 * t;
        let exact = (s2 / v).powf(1.5) * (-geometry::norm2(x) / (2.0 * v)).exp();
        assert!((g[0] - exact).abs() < 1e-10, "{} vs {exact}", g[0]);
        assert!(heat_point(|_| [1.0; 3], x, -1.0, &opts).is_err());
        let coarse = HeatPointOptions { points_per_axis: 16, wavelength: Some(0.1), ..Default::default() };
        assert!(matches!(heat_point(|_| [1.0; 3], x, 1.0, &coarse), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn radial_route_matches_tensor_rule() {
        let t = 0.5;
        for kind in [KatoKind::Plain, KatoKind::Modulated] {
            let d = KatoDatum::new(kind, 1.0);
            for x in [[0.5, 0.2, -0.3], [1.2, -0.4, 0.8]] {
                let radial = d.heat(x, t).unwrap().value;
                let opts = HeatPointOptions { points_per_axis: 160, ..Default::default() };
                let direct = heat_point(|y| d.eval(y), x, t, &opts).unwrap();
                let err = geometry::norm(geometry::sub(radial, direct));
                assert!(err < 1e-8 * geometry::norm(direct), "{kind:?} {x:?}: {err:e}");
            }
        }
    }

    #[test]
    fn heat_is_linear_and_continuous_at_zero_time() {
        let x = [60.0, 80.0, 0.0];
        let one = KatoDatum::new(KatoKind::Plain, 1.0).heat_difference(x, 1.0).unwrap().value;
        let two = KatoDatum::new(KatoKind::Plain, 2.0).heat_difference(x, 1.0).unwrap().value;
        assert!(geometry::norm(geometry::sub(two, geometry::scale(one, 2.0))) < 1e-14 * geometry::norm(two).max(1e-300) + 1e-22);
        let d = KatoDatum::new(KatoKind::Plain, 1.0);
        let small: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&t| geometry::norm(d.heat_difference([2.0, 1.0, 0.5], t).unwrap().value))
            .collect();
        assert!(small[0] > small[1] && small[1] > small[2] && small[2] < 1e-3);
    }

    #[test]
    fn zero_datum_has_zero_norms() {
        let p = lq_trend(&KatoDatum::new(KatoKind::Plain, 0.0), 1.0, 2.0, &[5.0, 10.0]).unwrap();
        assert_eq!(p.values, vec![0.0, 0.0]);
        assert!(lq_trend(&KatoDatum::new(KatoKind::Plain, 1.0), 1.0, 3.0, &[5.0]).is_err());
    }

    #[test]
    fn angular_factor_closed_forms() {
        assert!((angular_factor(1.0) - PI * PI).abs() < 1e-12);
        assert!((angular_factor(2.0) - 8.0 * PI / 3.0).abs() < 1e-12);
    }
}
