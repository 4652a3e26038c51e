//! The oscillating datum `a = η·Σ λ_j a_{α_j}` in Fourier space, lattice
//! fields that hold it, and its structural checks.
//!
//! Fourier convention: `f̂(ξ) = ∫ f(x) e^{−iξ·x} dx`, so Plancherel reads
//! `∫ f g = (2π)^{−d} ∫ f̂ conj(ĝ)`. The `(2π)^{−d}` factor is carried
//! explicitly everywhere.

mod fft;
mod io;
mod lattice;

pub use fft::FieldFft;
pub use io::{read_field, write_field, FIELD_MAGIC, FIELD_VERSION};
pub use lattice::{
    assemble_spectral, check_divergence_free, check_symmetry, lattice_support, Grid, LatticePoint, SpectralField,
    MIN_POINTS_PER_DELTA,
};
pub(crate) use lattice::forward_real;

use crate::error::{Error, Result};
use crate::geometry::{self, Dim, TildeMap, Vec3};
use crate::profile::BumpProfile;
use crate::quadrature::GaussRule;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One modulation pair `(λ_j, α_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationTerm {
    pub lambda: f64,
    pub alpha: Vec3,
}

/// A bump center `c` of `ψ̂_{α_j}` together with the sign it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpCenter {
    pub term: usize,
    pub center: Vec3,
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct DatumSpec {
    pub dim: Dim,
    pub delta: f64,
    pub eta: f64,
    pub terms: Vec<ModulationTerm>,
    pub profile: BumpProfile,
}

/// Serialized form of [`DatumSpec`]; the profile is referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumConfig {
    pub dimension: Dim,
    pub delta: f64,
    pub eta: f64,
    #[serde(default = "default_profile")]
    pub profile: String,
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub lambda: f64,
    pub alpha: Vec<f64>,
}

fn default_profile() -> String {
    "standard".into()
}

impl DatumSpec {
    /// Validated constructor.
    pub fn new(dim: Dim, delta: f64, eta: f64, terms: Vec<ModulationTerm>, profile: BumpProfile) -> Result<Self> {
        let spec = Self::new_unchecked(dim, delta, eta, terms, profile)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Constructor that only checks finiteness and dimensions, not the
    /// cone and disjointness constraints. Used to evaluate inadmissible
    /// dilations in convergence studies.
    pub fn new_unchecked(
        dim: Dim,
        delta: f64,
        eta: f64,
        terms: Vec<ModulationTerm>,
        profile: BumpProfile,
    ) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidDatum(format!("delta must be positive, got {delta}")));
        }
        if !eta.is_finite() {
            return Err(Error::InvalidDatum("eta must be finite".into()));
        }
        if profile.dim() != dim {
            return Err(Error::InvalidDatum(format!(
                "profile normalized for d = {} used with d = {dim}",
                profile.dim()
            )));
        }
        let mut terms = terms;
        for (j, t) in terms.iter_mut().enumerate() {
            if !t.lambda.is_finite() || t.alpha.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidDatum(format!("term {j} has non-finite entries")));
            }
            if dim == Dim::Two {
                t.alpha[2] = 0.0;
            }
        }
        Ok(Self { dim, delta, eta, terms, profile })
    }

    pub fn from_config(cfg: &DatumConfig) -> Result<Self> {
        let profile = BumpProfile::named(&cfg.profile, cfg.dimension)?;
        let d = cfg.dimension.n();
        let terms = cfg
            .terms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if t.alpha.len() != d {
                    return Err(Error::Config(format!(
                        "term {j}: alpha has {} entries, expected {d}",
                        t.alpha.len()
                    )));
                }
                let mut alpha = [0.0; 3];
                alpha[..d].copy_from_slice(&t.alpha);
                Ok(ModulationTerm { lambda: t.lambda, alpha })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cfg.dimension, cfg.delta, cfg.eta, terms, profile)
    }

    pub fn to_config(&self) -> DatumConfig {
        let d = self.dim.n();
        DatumConfig {
            dimension: self.dim,
            delta: self.delta,
            eta: self.eta,
            profile: self.profile.name().to_string(),
            terms: self
                .terms
                .iter()
                .map(|t| TermConfig { lambda: t.lambda, alpha: t.alpha[..d].to_vec() })
                .collect(),
        }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    pub fn max_alpha(&self) -> f64 {
        self.terms.iter().map(|t| geometry::norm(t.alpha)).fold(0.0, f64::max)
    }

    /// Checks the cone conditions on every `α_j` and pairwise disjointness
    /// of all bump balls.
    pub fn validate(&self) -> Result<()> {
        let margin = 1e-9 * self.max_alpha().max(self.delta);
        let margin_cone = self.delta * std::f64::consts::SQRT_2 + margin;
        for (j, t) in self.terms.iter().enumerate() {
            let a = t.alpha;
            match self.dim {
                Dim::Two => {
                    if a[1] == 0.0 {
                        return Err(Error::InvalidDatum(format!("term {j}: alpha_2 must be nonzero")));
                    }
                    if !(a[0] > a[1].abs() + margin_cone) {
                        return Err(Error::InvalidDatum(format!(
                            "term {j}: alpha = ({}, {}) violates alpha_1 > |alpha_2| + delta*sqrt(2) (delta = {})",
                            a[0], a[1], self.delta
                        )));
                    }
                }
                Dim::Three => {
                    if a[1] == a[2] {
                        return Err(Error::InvalidDatum(format!("term {j}: alpha_2 must differ from alpha_3")));
                    }
                    if !(a[1].min(a[2]) > a[0].max(0.0) + margin_cone) {
                        return Err(Error::InvalidDatum(format!(
                            "term {j}: alpha = ({}, {}, {}) violates min(alpha_2, alpha_3) > max(alpha_1, 0) + delta*sqrt(2) (delta = {})",
                            a[0], a[1], a[2], self.delta
                        )));
                    }
                }
            }
        }
        let centers = self.bump_centers();
        for (p, a) in centers.iter().enumerate() {
            for b in &centers[p + 1..] {
                let dist = geometry::norm(geometry::sub(a.center, b.center));
                if !(dist > 2.0 * self.delta + margin) {
                    return Err(Error::InvalidDatum(format!(
                        "bump supports overlap: centers of terms {} and {} are {dist:.6} apart, need > 2*delta = {}",
                        a.term,
                        b.term,
                        2.0 * self.delta
                    )));
                }
            }
        }
        Ok(())
    }

    /// Centers of the bumps making up `ψ̂_{α_j}`, with their signs.
    pub fn term_centers(&self, j: usize) -> Vec<BumpCenter> {
        let alpha = self.terms[j].alpha;
        let tilde = TildeMap::new(self.dim);
        let mut out = Vec::with_capacity(2 * self.dim.n());
        let mut c = alpha;
        for rot in 0..self.dim.n() {
            let sign = match (self.dim, rot) {
                (Dim::Two, 1) => -1.0,
                _ => 1.0,
            };
            out.push(BumpCenter { term: j, center: c, sign });
            out.push(BumpCenter { term: j, center: geometry::neg(c), sign });
            c = tilde.apply(c);
        }
        out
    }

    pub fn bump_centers(&self) -> Vec<BumpCenter> {
        (0..self.terms.len()).flat_map(|j| self.term_centers(j)).collect()
    }

    /// `ψ̂_{α_j}(ξ)`.
    pub fn psi_hat(&self, j: usize, xi: Vec3) -> f64 {
        self.term_centers(j)
            .iter()
            .map(|b| b.sign * self.profile.dilated(geometry::norm(geometry::sub(xi, b.center)), self.delta))
            .sum()
    }

    /// `Σ_j λ_j ψ̂_{α_j}(ξ)`.
    pub fn psi_sum(&self, xi: Vec3) -> f64 {
        (0..self.terms.len())
            .filter(|&j| self.terms[j].lambda != 0.0)
            .map(|j| self.terms[j].lambda * self.psi_hat(j, xi))
            .sum()
    }

    /// `â(ξ) = η Σ_j λ_j â_{α_j}(ξ)`.
    pub fn datum_hat(&self, xi: Vec3) -> [Complex64; 3] {
        curl_prefactor(self.dim, xi, self.eta * self.psi_sum(xi))
    }
}

impl Serialize for DatumSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_config().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DatumSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cfg = DatumConfig::deserialize(d)?;
        Self::from_config(&cfg).map_err(serde::de::Error::custom)
    }
}

/// The curl in Fourier space applied to a scalar stream amplitude `s`:
/// `(−iξ₂, iξ₁)·s` in the plane, `i(ξ₂−ξ₃, ξ₃−ξ₁, ξ₁−ξ₂)·s` in space.
#[inline]
pub fn curl_prefactor(dim: Dim, xi: Vec3, s: f64) -> [Complex64; 3] {
    let z = Complex64::new(0.0, 0.0);
    if s == 0.0 {
        return [z; 3];
    }
    match dim {
        Dim::Two => [Complex64::new(0.0, -xi[1] * s), Complex64::new(0.0, xi[0] * s), z],
        Dim::Three => [
            Complex64::new(0.0, (xi[1] - xi[2]) * s),
            Complex64::new(0.0, (xi[2] - xi[0]) * s),
            Complex64::new(0.0, (xi[0] - xi[1]) * s),
        ],
    }
}

/// Quadrature nodes covering the union of all bump balls of a spec.
///
/// The bounding box of the supports is cut into cubic cells of side
/// `delta / cells_per_delta`; each cell meeting some ball carries a tensor
/// Gauss–Legendre rule. Overlapping balls are handled correctly since each
/// point of frequency space is covered exactly once.
pub fn support_cover(spec: &DatumSpec, cells_per_delta: usize, points: usize) -> Result<Vec<(Vec3, f64)>> {
    if cells_per_delta == 0 {
        return Err(Error::under_resolved("cells_per_delta", "must be at least 1"));
    }
    let rule = GaussRule::new(points)?;
    let h = spec.delta / cells_per_delta as f64;
    let centers = spec.bump_centers();
    let d = spec.dim.n();
    let mut cells = std::collections::BTreeSet::new();
    for b in &centers {
        let mut lo = [0i64; 3];
        let mut hi = [1i64; 3];
        for a in 0..d {
            lo[a] = ((b.center[a] - spec.delta) / h).floor() as i64;
            hi[a] = ((b.center[a] + spec.delta) / h).ceil() as i64;
        }
        for idx in box_indices(lo, hi) {
            // Closest point of the cell to the bump center.
            let mut dist2 = 0.0;
            for a in 0..d {
                let c0 = idx[a] as f64 * h;
                dist2 += (b.center[a].clamp(c0, c0 + h) - b.center[a]).powi(2);
            }
            if dist2 < spec.delta * spec.delta {
                cells.insert(idx);
            }
        }
    }
    let mut out = Vec::with_capacity(cells.len() * points.pow(d as u32));
    for key in cells {
        let mut center = [0.0; 3];
        for a in 0..d {
            center[a] = (key[a] as f64 + 0.5) * h;
        }
        out.extend(rule.tensor_box(spec.dim, center, 0.5 * h));
    }
    Ok(out)
}

/// All integer points of the half-open box `[lo, hi)`, last axis fastest.
pub(crate) fn box_indices(lo: [i64; 3], hi: [i64; 3]) -> impl Iterator<Item = [i64; 3]> {
    let ext = [0, 1, 2].map(|a| (hi[a] - lo[a]).max(0) as usize);
    (0..ext[0] * ext[1] * ext[2]).map(move |flat| {
        let i2 = flat % ext[2];
        let i1 = (flat / ext[2]) % ext[1];
        let i0 = flat / (ext[1] * ext[2]);
        [lo[0] + i0 as i64, lo[1] + i1 as i64, lo[2] + i2 as i64]
    })
}

/// Default `(cells per δ, Gauss points per cell axis)` for [`support_cover`].
pub fn default_cover(dim: Dim) -> (usize, usize) {
    match dim {
        Dim::Two => (3, 16),
        Dim::Three => (2, 12),
    }
}

/// `M₀ = ∫ a ⊗ a dx`, by Plancherel quadrature over the bump supports.
pub fn moment_matrix_zero(spec: &DatumSpec) -> Result<[[f64; 3]; 3]> {
    let (cells, points) = default_cover(spec.dim);
    let nodes = support_cover(spec, cells, points)?;
    let d = spec.dim.n();
    let mut m = [[0.0; 3]; 3];
    for (xi, w) in nodes {
        let a = spec.datum_hat(xi);
        for r in 0..d {
            for c in r..d {
                m[r][c] += w * (a[r] * a[c].conj()).re;
            }
        }
    }
    let norm = (2.0 * std::f64::consts::PI).powi(d as i32);
    for r in 0..d {
        for c in r..d {
            m[r][c] /= norm;
            m[c][r] = m[r][c];
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_2d(delta: f64) -> DatumSpec {
        let p = BumpProfile::standard(Dim::Two);
        DatumSpec::new(
            Dim::Two,
            delta,
            1.0,
            vec![
                ModulationTerm { lambda: 3f64.sqrt() / 2.0, alpha: [3f64.sqrt(), 1.0, 0.0] },
                ModulationTerm { lambda: 2f64.sqrt() / 2.0, alpha: [6f64.sqrt(), -(2f64.sqrt()), 0.0] },
            ],
            p,
        )
        .unwrap()
    }

    fn paper_3d(delta: f64) -> DatumSpec {
        let p = BumpProfile::standard(Dim::Three);
        DatumSpec::new(
            Dim::Three,
            delta,
            1.0,
            vec![
                ModulationTerm { lambda: 3f64.powf(0.25) / 2.0, alpha: [0.0, 1.0, 3f64.sqrt()] },
                ModulationTerm { lambda: 2f64.sqrt() / 2.0, alpha: [0.0, 6f64.sqrt(), 2f64.sqrt()] },
            ],
            p,
        )
        .unwrap()
    }

    #[test]
    fn psi_hat_at_bump_centers() {
        let s = paper_2d(0.2);
        let peak = s.profile.value(0.0) / 0.2;
        let a = s.terms[0].alpha;
        assert!((s.psi_hat(0, a) - peak).abs() < 1e-14);
        assert!((s.psi_hat(0, [a[1], a[0], 0.0]) + peak).abs() < 1e-14);
        let s3 = paper_3d(0.3);
        let peak3 = s3.profile.value(0.0) / 0.3f64.powf(1.5);
        let a = s3.terms[1].alpha;
        assert!((s3.psi_hat(1, [a[1], a[2], a[0]]) - peak3).abs() < 1e-12);
        assert!((s3.psi_hat(1, [a[2], a[0], a[1]]) - peak3).abs() < 1e-12);
    }

    #[test]
    fn datum_hat_single_term_at_alpha() {
        let p = BumpProfile::standard(Dim::Two);
        let alpha = [2.0, 0.5, 0.0];
        let s = DatumSpec::new(Dim::Two, 0.25, 0.7, vec![ModulationTerm { lambda: 1.0, alpha }], p).unwrap();
        let v = s.datum_hat(alpha);
        let amp = 0.7 * s.profile.value(0.0) / 0.25;
        assert!((v[0] - Complex64::new(0.0, -alpha[1] * amp)).norm() < 1e-13);
        assert!((v[1] - Complex64::new(0.0, alpha[0] * amp)).norm() < 1e-13);
        assert_eq!(s.datum_hat([0.0; 3])[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn validation_rejects_cone_and_overlap_violations() {
        let p = BumpProfile::standard(Dim::Two);
        let cone = DatumSpec::new(Dim::Two, 0.5, 1.0, vec![ModulationTerm { lambda: 1.0, alpha: [1.0, 0.5, 0.0] }], p.clone());
        assert!(cone.is_err());
        let overlap = DatumSpec::new(
            Dim::Two,
            0.25,
            1.0,
            vec![
                ModulationTerm { lambda: 1.0, alpha: [2.0, 0.5, 0.0] },
                ModulationTerm { lambda: 1.0, alpha: [2.2, 0.6, 0.0] },
            ],
            p,
        );
        let msg = overlap.unwrap_err().to_string();
        assert!(msg.contains("overlap"), "{msg}");
        assert!(paper_3d(0.5).validate().is_ok());
    }

    #[test]
    fn config_round_trip() {
        let s = paper_3d(0.25);
        let text = toml::to_string(&s).unwrap();
        let back: DatumSpec = toml::from_str(&text).unwrap();
        assert_eq!(back.to_config(), s.to_config());
    }

    #[test]
    fn moment_matrix_has_equal_diagonal() {
        for s in [paper_2d(0.25), paper_3d(0.4)] {
            let m = moment_matrix_zero(&s).unwrap();
            let d = s.dim.n();
            for i in 1..d {
                assert!((m[i][i] / m[0][0] - 1.0).abs() < 1e-10);
            }
            assert!(m[0][1] != 0.0);
        }
    }

    #[test]
    fn support_cover_integrates_bump_mass() {
        // Every bump carries mass λ²·∫φ̂^δ² = λ²/d.
        let s = paper_2d(0.25);
        let nodes = support_cover(&s, 3, 16).unwrap();
        let m: f64 = nodes.iter().map(|(xi, w)| w * s.psi_sum(*xi).powi(2)).sum();
        let expect: f64 = s.terms.iter().map(|t| 4.0 * t.lambda.powi(2) / 2.0).sum();
        assert!((m / expect - 1.0).abs() < 1e-9, "{m} vs {expect}");
    }
}
