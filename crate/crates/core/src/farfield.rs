//! Leading far-field profile `∇Π` determined by the moment matrix `K(t)`,
//! the decay classification it induces, directional magnitude maps on the
//! sphere, and log–log exponent fits.
//!
//! `Π(x) = Σ_{h,k} (δ_{hk}/(d|x|^d) − x_h x_k/|x|^{d+2}) K_{hk}` with the
//! dimensional constant set to 1.

use crate::error::{Error, Result};
use crate::geometry::{self, Dim, Mat3, Vec3};
use crate::nsflow::MomentTrajectory;
use crate::quadrature::linear_fit;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative tolerance for `K ∝ I`.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_SPHERE_SAMPLES: usize = 4096;
/// Positivity threshold for `c_ω`, relative to the largest magnitude.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

fn check_point(x: Vec3, dim: Dim) -> Result<f64> {
    let r = geometry::norm(x);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("far-field profile is singular at |x| = {r}")));
    }
    if dim == Dim::Two && x[2] != 0.0 {
        return Err(Error::Domain("third coordinate must vanish in two dimensions".into()));
    }
    Ok(r)
}

/// `Π(x)`.
pub fn eval_pi(k: &Mat3, dim: Dim, x: Vec3) -> Result<f64> {
    let r = check_point(x, dim)?;
    let d = dim.n() as i32;
    let xkx = geometry::dot(x, geometry::mat_vec(k, x));
    Ok(geometry::trace(k, dim) / (d as f64 * r.powi(d)) - xkx / r.powi(d + 2))
}

/// `∇Π(x)`, evaluated at `x = r·ω`.
pub fn eval_grad_pi(k: &Mat3, dim: Dim, omega: Vec3, r: f64) -> Result<Vec3> {
    if ((geometry::norm(omega)) - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("direction must be a unit vector, |ω| = {}", geometry::norm(omega))));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("far-field profile is singular at r = {r}")));
    }
    grad_pi_at(k, dim, geometry::scale(omega, r))
}

/// `∇Π(x)` at an arbitrary nonzero point.
pub fn grad_pi_at(k: &Mat3, dim: Dim, x: Vec3) -> Result<Vec3> {
    let r = check_point(x, dim)?;
    let d = dim.n() as i32;
    let tr = geometry::trace(k, dim);
    let kx = geometry::mat_vec(k, x);
    let xkx = geometry::dot(x, kx);
    let (a, b) = (r.powi(-d - 2), r.powi(-d - 4));
    let mut g = [0.0; 3];
    for j in 0..dim.n() {
        g[j] = -tr * x[j] * a - 2.0 * kx[j] * a + (d + 2) as f64 * xkx * x[j] * b;
    }
    Ok(g)
}

/// Largest deviation of `K` from `(tr K/d)·I`, relative to `|K|_max`
/// (off-diagonal maximum and diagonal spread).
pub fn deviation_from_identity(k: &Mat3, dim: Dim) -> f64 {
    let d = dim.n();
    let scale = geometry::mat_max_abs(k, dim);
    if scale == 0.0 {
        return 0.0;
    }
    let mut off = 0.0_f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..d {
        lo = lo.min(k[i][i]);
        hi = hi.max(k[i][i]);
        for j in 0..d {
            if i != j {
                off = off.max(k[i][j].abs());
            }
        }
    }
    off.max(hi - lo) / scale
}

/// `−(d+2)` when `K` is proportional to the identity within `tol`, else `−(d+1)`.
pub fn classify_decay(k: &Mat3, dim: Dim, tol: f64) -> i32 {
    let d = dim.n() as i32;
    if deviation_from_identity(k, dim) <= tol {
        -(d + 2)
    } else {
        -(d + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticProfile {
    pub time: f64,
    pub k: Mat3,
    /// Profile constant (fixed to 1).
    pub gamma_d: f64,
    pub exponent: i32,
    pub deviation: f64,
    pub tolerance: f64,
}

impl AsymptoticProfile {
    pub fn new(time: f64, k: Mat3, dim: Dim, tol: f64) -> Self {
        Self {
            time,
            k,
            gamma_d: 1.0,
            exponent: classify_decay(&k, dim, tol),
            deviation: deviation_from_identity(&k, dim),
            tolerance: tol,
        }
    }
}

/// Classification at the given times, `K` interpolated from the trajectory.
pub fn classify_trajectory(m: &MomentTrajectory, times: &[f64], tol: f64) -> Vec<AsymptoticProfile> {
    times.iter().map(|&t| AsymptoticProfile::new(t, m.at(t), m.dim, tol)).collect()
}

/// Quasi-uniform unit vectors: equally spaced angles (2D) or a Fibonacci lattice (3D).
pub fn sphere_samples(dim: Dim, n: usize) -> Vec<Vec3> {
    match dim {
        Dim::Two => (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        Dim::Three => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    [rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct COmegaMap {
    pub directions: Vec<Vec3>,
    /// `|∂_jΠ(ω)|` per direction.
    pub magnitudes: Vec<Vec3>,
    pub max: f64,
    /// Absolute threshold used for the positivity fraction.
    pub threshold: f64,
    /// Fraction of directions where every component exceeds `threshold`.
    pub positive_fraction: f64,
}

/// `|∂_jΠ(ω)|` over `n` sphere samples; `threshold_rel` is relative to the
/// largest component magnitude.
pub fn c_omega_map(k: &Mat3, dim: Dim, n: usize, threshold_rel: f64, tol: f64) -> Result<COmegaMap> {
    if classify_decay(k, dim, tol) == -(dim.n() as i32 + 2) {
        return Err(Error::ProfileVanishes);
    }
    if n == 0 {
        return Err(Error::Config("sphere sample count must be positive".into()));
    }
    let directions = sphere_samples(dim, n);
    let magnitudes: Vec<Vec3> = directions
        .par_iter()
        .map(|&w| grad_pi_at(k, dim, w).map(|g| g.map(f64::abs)))
        .collect::<Result<_>>()?;
    let d = dim.n();
    let max = magnitudes.iter().flat_map(|m| m[..d].iter().cloned()).fold(0.0, f64::max);
    let threshold = threshold_rel * max;
    let positive = magnitudes.iter().filter(|m| m[..d].iter().all(|&v| v > threshold)).count();
    Ok(COmegaMap {
        directions,
        magnitudes,
        max,
        threshold,
        positive_fraction: positive as f64 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: Vec<f64>,
    /// Radii whose samples fell below the noise floor.
    pub excluded: Vec<f64>,
}

/// Least-squares slope of `log|f(rω)|` against `log r`. Samples with
/// magnitude at or below `floor` (or non-finite) are excluded.
pub fn fit_decay_exponent(
    sampler: impl Fn(Vec3) -> Result<Vec3>,
    omega: Vec3,
    radii: &[f64],
    floor: f64,
) -> Result<DecayFit> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().is_some_and(|&r| !(r > 0.0)) {
        return Err(Error::Domain("radii must be positive and increasing".into()));
    }
    let (mut xs, mut ys, mut used, mut excluded) = (vec![], vec![], vec![], vec![]);
    for &r in radii {
        let v = geometry::norm(sampler(geometry::scale(omega, r))?);
        if v.is_finite() && v > floor {
            xs.push(r.ln());
            ys.push(v.ln());
            used.push(r);
        } else {
            excluded.push(r);
        }
    }
    let (slope, intercept) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Domain(format!("only {} radii above the noise floor", used.len())))?;
    Ok(DecayFit {
        slope,
        intercept,
        used,
        excluded,
    })
}

/// Geometrically spaced radii.
pub fn log_radii(r0: f64, r1: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| r0 * (r1 / r0).powf(i as f64 / (n.max(2) - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(dim: Dim, e: [f64; 6]) -> Mat3 {
        match dim {
            Dim::Two => [[e[0], e[1], 0.0], [e[1], e[2], 0.0], [0.0; 3]],
            Dim::Three => [[e[0], e[1], e[2]], [e[1], e[3], e[4]], [e[2], e[4], e[5]]],
        }
    }

    fn unit(dim: Dim, v: [f64; 3]) -> Vec3 {
        let v = if dim == Dim::Two { [v[0], v[1], 0.0] } else { v };
        geometry::scale(v, 1.0 / geometry::norm(v))
    }

    #[test]
    fn identity_cancels() {
        for dim in [Dim::Two, Dim::Three] {
            let mut k = [[0.0; 3]; 3];
            for i in 0..dim.n() {
                k[i][i] = 1.0;
            }
            let g = eval_grad_pi(&k, dim, unit(dim, [0.3, -0.8, 0.5]), 1.7).unwrap();
            assert!(geometry::norm(g) < 1e-15);
            let three = k.map(|row| row.map(|v| 3.0 * v));
            assert_eq!(classify_decay(&three, dim, DEFAULT_TOL), -(dim.n() as i32 + 2));
            assert!(matches!(c_omega_map(&k, dim, 64, 1e-3, DEFAULT_TOL), Err(Error::ProfileVanishes)));
        }
    }

    #[test]
    fn classification_examples() {
        let k = [[1.0, 0.1, 0.0], [0.1, 1.0, 0.0], [0.0; 3]];
        assert_eq!(classify_decay(&k, Dim::Two, DEFAULT_TOL), -3);
        assert_eq!(classify_decay(&[[0.0; 3]; 3], Dim::Two, DEFAULT_TOL), -4);
        assert!(eval_grad_pi(&k, Dim::Two, [1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn power_law_fit() {
        let radii = log_radii(10.0, 1000.0, 12);
        let f = fit_decay_exponent(|x| Ok([geometry::norm(x).powi(-3), 0.0, 0.0]), [1.0, 0.0, 0.0], &radii, 0.0).unwrap();
        assert!((f.slope + 3.0).abs() < 1e-6);
        let f = fit_decay_exponent(
            |x| Ok(if geometry::norm(x) > 500.0 { [0.0; 3] } else { [1.0 / geometry::norm(x), 0.0, 0.0] }),
            [1.0, 0.0, 0.0],
            &radii,
            1e-300,
        )
        .unwrap();
        assert!(!f.excluded.is_empty() && (f.slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn off_diagonal_zero_set_in_2d() {
        // K = [[0,1],[1,0]]: ∂₁Π ∝ sinθ(4cos²θ − 1)… components vanish on finitely many angles.
        let k = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]];
        let n = 4096;
        let mut last = 0.0;
        for thr in [1e-1, 1e-2, 1e-3, 1e-4] {
            let map = c_omega_map(&k, Dim::Two, n, thr, DEFAULT_TOL).unwrap();
            assert!(map.positive_fraction >= last);
            last = map.positive_fraction;
        }
        assert!(last > 0.999);
        // ∂₁Π(θ) = −2 sinθ + 8 cos²θ sinθ = 2 sinθ(4cos²θ − 1): zeros at θ = 0, π, ±π/3, ±2π/3.
        for th in [0.0, std::f64::consts::FRAC_PI_3, 2.0 * std::f64::consts::FRAC_PI_3] {
            let g = grad_pi_at(&k, Dim::Two, [th.cos(), th.sin(), 0.0]).unwrap();
            assert!(g[0].abs() < 1e-14, "{th}: {g:?}");
        }
    }

    #[test]
    fn tilde_equivariance() {
        // Symmetry class: equal diagonals and equal off-diagonals.
        for (dim, k) in [
            (Dim::Two, [[2.0, 0.3, 0.0], [0.3, 2.0, 0.0], [0.0; 3]]),
            (Dim::Three, [[2.0, 0.3, 0.3], [0.3, 2.0, 0.3], [0.3, 0.3, 2.0]]),
        ] {
            let tilde = geometry::TildeMap::new(dim);
            for w in sphere_samples(dim, 37) {
                let g = grad_pi_at(&k, dim, w).unwrap();
                let gt = grad_pi_at(&k, dim, tilde.apply(w)).unwrap();
                assert!(geometry::norm(geometry::sub(gt, tilde.apply(g))) < 1e-13);
            }
        }
    }

    #[test]
    fn fibonacci_samples_are_unit_and_balanced() {
        let s = sphere_samples(Dim::Three, 4096);
        let mean = s.iter().fold([0.0; 3], |a, &v| geometry::add(a, v));
        assert!(s.iter().all(|v| (geometry::norm(*v) - 1.0).abs() < 1e-12));
        assert!(geometry::norm(mean) / 4096.0 < 1e-3);
    }

    fn any_k(dim: Dim) -> impl Strategy<Value = Mat3> {
        proptest::array::uniform6(-2.0..2.0f64).prop_map(move |e| sym(dim, e))
    }

    fn any_dir(dim: Dim) -> impl Strategy<Value = Vec3> {
        proptest::array::uniform3(-1.0..1.0f64)
            .prop_filter("nonzero", move |v| geometry::norm(if dim == Dim::Two { [v[0], v[1], 0.0] } else { *v }) > 0.1)
            .prop_map(move |v| unit(dim, v))
    }

    proptest! {
        #[test]
        fn homogeneity(k in any_k(Dim::Three), w in any_dir(Dim::Three), r in 0.2..20.0f64) {
            let a = eval_grad_pi(&k, Dim::Three, w, r).unwrap();
            let b = eval_grad_pi(&k, Dim::Three, w, 1.0).unwrap();
            for j in 0..3 {
                prop_assert!((a[j] - r.powi(-4) * b[j]).abs() <= 1e-12 * (1.0 + b[j].abs()) * r.powi(-4));
            }
        }

        #[test]
        fn gradient_matches_finite_differences(k in any_k(Dim::Two), w in any_dir(Dim::Two), r in 0.5..3.0f64) {
            let x = geometry::scale(w, r);
            let g = grad_pi_at(&k, Dim::Two, x).unwrap();
            let h = 1e-4;
            for j in 0..2 {
                let mut p = x; p[j] += h;
                let mut m = x; m[j] -= h;
                let mut p2 = x; p2[j] += 2.0 * h;
                let mut m2 = x; m2[j] -= 2.0 * h;
                let f = |y| eval_pi(&k, Dim::Two, y).unwrap();
                let fd = (8.0 * (f(p) - f(m)) - (f(p2) - f(m2))) / (12.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-8 * (1.0 + g[j].abs()), "{} vs {}", fd, g[j]);
            }
        }

        #[test]
        fn trace_shift_invariance(k in any_k(Dim::Three), c in -3.0..3.0f64, w in any_dir(Dim::Three)) {
            let mut shifted = k;
            for i in 0..3 { shifted[i][i] += c; }
            let a = grad_pi_at(&k, Dim::Three, w).unwrap();
            let b = grad_pi_at(&shifted, Dim::Three, w).unwrap();
            prop_assert!(geometry::norm(geometry::sub(a, b)) < 1e-12);
            prop_assume!(deviation_from_identity(&k, Dim::Three) > 1e-3);
            prop_assert_eq!(classify_decay(&k, Dim::Three, DEFAULT_TOL), classify_decay(&shifted, Dim::Three, DEFAULT_TOL));
        }

        #[test]
        fn symmetric_class_reduces_to_off_diagonal(diag in 0.5..3.0f64, off in -1.0..1.0f64) {
            let k = [[diag, off, off], [off, diag, off], [off, off, diag]];
            let concentrated = classify_decay(&k, Dim::Three, DEFAULT_TOL) == -5;
            prop_assert_eq!(concentrated, off.abs() <= DEFAULT_TOL * diag.max(off.abs()));
        }

        #[test]
        fn magnitudes_scale_with_off_diagonal(off in 0.01..2.0f64) {
            let unit_map = c_omega_map(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]], Dim::Two, 64, 1e-3, DEFAULT_TOL).unwrap();
            let map = c_omega_map(&[[0.0, off, 0.0], [off, 0.0, 0.0], [0.0; 3]], Dim::Two, 64, 1e-3, DEFAULT_TOL).unwrap();
            for (a, b) in map.magnitudes.iter().zip(&unit_map.magnitudes) {
                prop_assert!((a[0] - off * b[0]).abs() <= 1e-12 * (1.0 + b[0]));
            }
        }
    }
}
