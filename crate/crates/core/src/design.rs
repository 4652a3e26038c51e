//! The linear design system that places sign changes of the heat
//! correlation at prescribed times.
//!
//! With `|α_j|² = γj` and `T_i = e^{−2γt_i}`, the approximate correlation is
//! `E^app(t) = Σ_j μ_j (1 − e^{−2γjt})`. Requiring `E^app(t_i) = 0` for every
//! `i` and fixing the derivative at `t₁` gives the square system `Mμ = (0,…,0,c)`.

use crate::error::{Error, Result};
use crate::fields::{DatumSpec, ModulationTerm};
use crate::geometry::{Dim, Vec3};
use crate::profile::BumpProfile;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Systems whose 1-norm condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub dimension: Dim,
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub dimension: Dim,
    pub gamma: f64,
    pub c: f64,
    #[serde(rename = "t_values")]
    pub t: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<Vec3>,
    pub matrix_det: f64,
    pub condition: f64,
}

/// Smallest gap between consecutive times, counting the gap from 0 to `t₁`.
pub fn min_gap(times: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut gap = f64::INFINITY;
    for &t in times {
        gap = gap.min(t - prev);
        prev = t;
    }
    gap
}

/// `0.05 · min gap`.
pub fn default_epsilon(times: &[f64]) -> f64 {
    0.05 * min_gap(times)
}

impl DesignProblem {
    pub fn new(dimension: Dim, times: Vec<f64>, epsilon: f64, gamma: f64, c: f64) -> Result<Self> {
        let p = Self { dimension, times, epsilon, gamma, c };
        p.validate()?;
        Ok(p)
    }

    /// Problem whose right-hand side is scaled so that `max_j |μ_j| = 1`.
    pub fn normalized(dimension: Dim, times: Vec<f64>, epsilon: Option<f64>, gamma: f64) -> Result<Self> {
        let eps = epsilon.unwrap_or_else(|| default_epsilon(&times));
        let mut p = Self::new(dimension, times, eps, gamma, 1.0)?;
        let mu = solve_mu(&p)?;
        let m = mu.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        p.c = 1.0 / m;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::InvalidDesign("times list is empty".into()));
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidDesign("times must be positive and finite".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDesign("times must be strictly increasing".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidDesign(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidDesign(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.c.is_finite() && self.c != 0.0) {
            return Err(Error::InvalidDesign("c must be nonzero and finite".into()));
        }
        Ok(())
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.times.iter().map(|t| (-2.0 * self.gamma * t).exp()).collect()
    }
}

fn check_t(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::InvalidDesign("no T values".into()));
    }
    for (i, &v) in t.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidDesign(format!("T_{} = {v} is outside (0, 1)", i + 1)));
        }
        if t[..i].contains(&v) {
            return Err(Error::InvalidDesign(format!("T_{} = {v} is repeated", i + 1)));
        }
    }
    Ok(())
}

/// Rows `(1 − T_i^j)_{j=1..N+1}` for each `i`, then `(j T₁^j)_j`.
pub fn build_matrix(t: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_t(t)?;
    let n = t.len() + 1;
    let mut m: Vec<Vec<f64>> = t
        .iter()
        .map(|&ti| (1..=n).map(|j| 1.0 - ti.powi(j as i32)).collect())
        .collect();
    m.push((1..=n).map(|j| j as f64 * t[0].powi(j as i32)).collect());
    Ok(m)
}

/// `det M = −T₁(1−T₁) ∏_i (1−T_i) ∏_{i≥2} (T₁−T_i) ∏_{i<i'} (T_{i'}−T_i)`.
pub fn det_closed(t: &[f64]) -> Result<f64> {
    check_t(t)?;
    let mut det = -t[0] * (1.0 - t[0]);
    for &ti in t {
        det *= 1.0 - ti;
    }
    for &ti in &t[1..] {
        det *= t[0] - ti;
    }
    for i in 0..t.len() {
        for ip in i + 1..t.len() {
            det *= t[ip] - t[i];
        }
    }
    Ok(det)
}

/// Dense LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(mut a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidDesign("matrix is not square".into()));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap_or(k);
            if a[p][k] == 0.0 {
                return Err(Error::IllConditioned { condition: f64::INFINITY });
            }
            if p != k {
                a.swap(p, k);
                perm.swap(p, k);
                sign = -sign;
            }
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                for j in k + 1..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Ok(Self { lu: a, perm, sign })
    }

    pub fn det(&self) -> f64 {
        self.sign * (0..self.lu.len()).map(|i| self.lu[i][i]).product::<f64>()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, with the inverse formed column by column.
    pub fn condition(&self, a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        let norm1 = |col: &dyn Fn(usize) -> Vec<f64>| (0..n).map(|j| col(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let a_norm = norm1(&|j| (0..n).map(|i| a[i][j]).collect());
        let inv_norm = norm1(&|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.solve(&e)
        });
        a_norm * inv_norm
    }
}

/// Solves `Mμ = (0,…,0,c)`.
pub fn solve_mu(problem: &DesignProblem) -> Result<Vec<f64>> {
    problem.validate()?;
    let t = problem.t_values();
    let m = build_matrix(&t)?;
    let lu = Lu::new(m.clone())?;
    let condition = lu.condition(&m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let mut rhs = vec![0.0; m.len()];
    *rhs.last_mut().unwrap() = problem.c;
    Ok(lu.solve(&rhs))
}

/// `Σ_j μ_j (1 − e^{−2γjt})`, `j = 1..`.
pub fn eval_eapp(mu: &[f64], gamma: f64, t: f64) -> f64 {
    mu.iter()
        .enumerate()
        .map(|(j, m)| m * -(-2.0 * gamma * (j + 1) as f64 * t).exp_m1())
        .sum()
}

/// `d/dt E^app = Σ_j μ_j 2γj e^{−2γjt}`.
pub fn eval_deapp(mu: &[f64], gamma: f64, t: f64) -> f64 {
    mu.iter()
        .enumerate()
        .map(|(j, m)| {
            let rate = 2.0 * gamma * (j + 1) as f64;
            m * rate * (-rate * t).exp()
        })
        .sum()
}

/// Geometric factor linking `λ²` to `μ`: `α₁α₂/|α|²` in the plane,
/// `(α₁−α₃)(α₂−α₃)/|α|²` in space.
pub fn geometric_factor(dim: Dim, alpha: Vec3) -> f64 {
    let n2 = crate::geometry::norm2(alpha);
    match dim {
        Dim::Two => alpha[0] * alpha[1] / n2,
        Dim::Three => (alpha[0] - alpha[2]) * (alpha[1] - alpha[2]) / n2,
    }
}

/// Deterministic angle rule: a direction on the sphere of radius `√(γj)`
/// inside the admissible cone whose geometric factor has the sign of `μ`.
pub fn angle_rule(dim: Dim, gamma: f64, j: usize, mu: f64) -> Vec3 {
    let r = (gamma * j as f64).sqrt();
    match dim {
        Dim::Two => {
            let th = if mu > 0.0 { PI / 8.0 } else { -PI / 8.0 };
            [r * th.cos(), r * th.sin(), 0.0]
        }
        Dim::Three => {
            let th = if mu > 0.0 { 3.0 * PI / 8.0 } else { PI / 8.0 };
            [0.0, r * th.cos(), r * th.sin()]
        }
    }
}

/// Whether `α` lies strictly inside the open cone used by the construction.
pub fn in_cone(dim: Dim, a: Vec3) -> bool {
    match dim {
        Dim::Two => a[0] > a[1].abs() && a[1] != 0.0,
        Dim::Three => a[1].min(a[2]) > a[0].max(0.0) && a[1] != a[2],
    }
}

fn assemble_solution(problem: &DesignProblem, mu: &[f64], alphas: Vec<Vec3>) -> Result<DesignSolution> {
    let t = problem.t_values();
    let m = build_matrix(&t)?;
    let lu = Lu::new(m.clone())?;
    let mut lambdas = Vec::with_capacity(mu.len());
    for (j, (&m_j, a)) in mu.iter().zip(&alphas).enumerate() {
        let radius2 = crate::geometry::norm2(*a);
        let want = problem.gamma * (j + 1) as f64;
        if ((radius2 - want) / want).abs() > 1e-12 {
            return Err(Error::InvalidDesign(format!("|alpha_{}|^2 = {radius2}, expected gamma*j = {want}", j + 1)));
        }
        if !in_cone(problem.dimension, *a) {
            return Err(Error::InvalidDesign(format!("alpha_{} = {a:?} is outside the admissible cone", j + 1)));
        }
        let g = geometric_factor(problem.dimension, *a);
        if m_j != 0.0 && g.signum() != m_j.signum() {
            return Err(Error::InvalidDesign(format!(
                "alpha_{} has geometric factor {g} of the wrong sign for mu = {m_j}",
                j + 1
            )));
        }
        lambdas.push((m_j / g).max(0.0).sqrt());
    }
    Ok(DesignSolution {
        dimension: problem.dimension,
        gamma: problem.gamma,
        c: problem.c,
        t,
        mu: mu.to_vec(),
        lambdas,
        alphas,
        matrix_det: lu.det(),
        condition: lu.condition(&m),
    })
}

/// Realizes each `μ_j` as `(λ_j, α_j)` via [`angle_rule`].
pub fn realize_phases(problem: &DesignProblem, mu: &[f64]) -> Result<DesignSolution> {
    let alphas = mu
        .iter()
        .enumerate()
        .map(|(j, &m)| angle_rule(problem.dimension, problem.gamma, j + 1, m))
        .collect();
    assemble_solution(problem, mu, alphas)
}

/// Realizes `μ` with caller-chosen directions (checked for radius, cone and sign).
pub fn realize_with_alphas(problem: &DesignProblem, mu: &[f64], alphas: Vec<Vec3>) -> Result<DesignSolution> {
    if alphas.len() != mu.len() {
        return Err(Error::InvalidDesign(format!("{} alphas for {} coefficients", alphas.len(), mu.len())));
    }
    assemble_solution(problem, mu, alphas)
}

/// Solve and realize with the angle rule.
pub fn solve_design(problem: &DesignProblem) -> Result<DesignSolution> {
    let mu = solve_mu(problem)?;
    realize_phases(problem, &mu)
}

/// Directions of the explicit single-time example with `γ = 4`:
/// `(√3, 1)`, `(√6, −√2)` in the plane and `(0, 1, √3)`, `(0, √6, √2)` in space.
pub fn example_alphas(dim: Dim) -> Vec<Vec3> {
    let (s2, s3, s6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
    match dim {
        Dim::Two => vec![[s3, 1.0, 0.0], [s6, -s2, 0.0]],
        Dim::Three => vec![[0.0, 1.0, s3], [0.0, s6, s2]],
    }
}

/// How the directions `α_j` are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directions {
    /// [`angle_rule`].
    #[default]
    Rule,
    /// [`example_alphas`] (single time, `γ = 4` only).
    Example,
}

impl std::str::FromStr for Directions {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rule" => Ok(Directions::Rule),
            "example" => Ok(Directions::Example),
            _ => Err(Error::Config(format!("unknown direction choice '{s}' (rule | example)"))),
        }
    }
}

/// Solve and realize with the chosen directions.
pub fn solve_design_with(problem: &DesignProblem, directions: Directions) -> Result<DesignSolution> {
    let mu = solve_mu(problem)?;
    match directions {
        Directions::Rule => realize_phases(problem, &mu),
        Directions::Example => {
            if problem.times.len() != 1 || problem.gamma != 4.0 {
                return Err(Error::InvalidDesign(
                    "the example directions exist only for a single time and gamma = 4".into(),
                ));
            }
            realize_with_alphas(problem, &mu, example_alphas(problem.dimension))
        }
    }
}

impl DesignSolution {
    /// `μ_j` recomputed from `(λ_j, α_j)`.
    pub fn realized_mu(&self) -> Vec<f64> {
        self.lambdas
            .iter()
            .zip(&self.alphas)
            .map(|(l, a)| l * l * geometric_factor(self.dimension, *a))
            .collect()
    }

    /// The datum `η Σ λ_j a_{α_j}` at dilation `δ`.
    pub fn to_datum(&self, delta: f64, eta: f64, profile: BumpProfile) -> Result<DatumSpec> {
        DatumSpec::new(self.dimension, delta, eta, self.terms(), profile)
    }

    pub fn terms(&self) -> Vec<ModulationTerm> {
        self.lambdas
            .iter()
            .zip(&self.alphas)
            .map(|(&lambda, &alpha)| ModulationTerm { lambda, alpha })
            .collect()
    }

    /// Largest `δ` for which the datum is admissible, found by bisection on
    /// the validation predicate.
    pub fn max_delta(&self) -> f64 {
        let profile = BumpProfile::standard(self.dimension);
        let ok = |d: f64| DatumSpec::new(self.dimension, d, 1.0, self.terms(), profile.clone()).is_ok();
        let (mut lo, mut hi) = (0.0, crate::geometry::norm(self.alphas[0]));
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub residual: f64,
    /// `max(|c|, max|μ_j|)`; residuals are judged relative to it.
    pub scale: f64,
    pub eapp_at_times: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub sign_changes: Vec<bool>,
    /// `dE^app/dt(t₁)`; the last matrix row makes this `2γc`.
    pub derivative_t1: f64,
    pub expected_derivative_t1: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Checks `E^app(t_i) = 0`, nonzero derivatives and actual sign changes.
pub fn verify_design(solution: &DesignSolution, problem: &DesignProblem) -> DesignReport {
    let mut failures = Vec::new();
    let t = problem.t_values();
    let residual = match build_matrix(&t) {
        Ok(m) => m
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let rhs = if i + 1 == m.len() { problem.c } else { 0.0 };
                (row.iter().zip(&solution.mu).map(|(a, b)| a * b).sum::<f64>() - rhs).abs()
            })
            .fold(0.0, f64::max),
        Err(e) => {
            failures.push(e.to_string());
            f64::INFINITY
        }
    };
    // Rows combine terms of size |μ|, which can far exceed |c|.
    let scale = solution.mu.iter().fold(problem.c.abs(), |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    if !(residual <= tol) {
        failures.push(format!("system residual {residual:.3e} exceeds {tol:.3e}"));
    }
    let g = problem.gamma;
    let eapp: Vec<f64> = problem.times.iter().map(|&ti| eval_eapp(&solution.mu, g, ti)).collect();
    let deriv: Vec<f64> = problem.times.iter().map(|&ti| eval_deapp(&solution.mu, g, ti)).collect();
    let mut changes = Vec::new();
    for (i, &ti) in problem.times.iter().enumerate() {
        if !(eapp[i].abs() <= tol) {
            failures.push(format!("E^app(t_{}) = {:.3e}", i + 1, eapp[i]));
        }
        if deriv[i] == 0.0 {
            failures.push(format!("dE^app/dt vanishes at t_{}", i + 1));
        }
        let prev = if i == 0 { 0.0 } else { problem.times[i - 1] };
        let mut gap = ti - prev;
        if let Some(&next) = problem.times.get(i + 1) {
            gap = gap.min(next - ti);
        }
        let h = 0.5 * problem.epsilon.min(gap / 4.0);
        let lo = eval_eapp(&solution.mu, g, ti - h);
        let hi = eval_eapp(&solution.mu, g, ti + h);
        let change = lo * hi < 0.0;
        if !change {
            failures.push(format!("no sign change of E^app across t_{}", i + 1));
        }
        changes.push(change);
    }
    DesignReport {
        residual,
        scale,
        eapp_at_times: eapp,
        derivative_t1: deriv[0],
        derivatives: deriv,
        sign_changes: changes,
        expected_derivative_t1: 2.0 * g * problem.c,
        passed: failures.is_empty(),
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(dim: Dim) -> DesignProblem {
        DesignProblem::new(dim, vec![0.125 * 2f64.ln()], 0.02, 4.0, 1.0).unwrap()
    }

    #[test]
    fn two_by_two_matrix_and_determinant() {
        let m = build_matrix(&[0.5]).unwrap();
        assert_eq!(m, vec![vec![0.5, 0.75], vec![0.5, 0.5]]);
        // (1−T)·2T² − T(1−T²) at T = 1/2.
        let direct = 0.5 * 0.5 - 0.5 * 0.75;
        assert!((det_closed(&[0.5]).unwrap() - direct).abs() < 1e-15);
        assert_eq!(direct, -0.125);
        let m2 = build_matrix(&[0.5, 0.25]).unwrap();
        assert_eq!(m2[1], vec![0.75, 15.0 / 16.0, 63.0 / 64.0]);
    }

    #[test]
    fn invalid_t_is_rejected() {
        assert!(build_matrix(&[1.0]).is_err());
        assert!(build_matrix(&[0.3, 0.3]).is_err());
        assert!(det_closed(&[0.0]).is_err());
    }

    #[test]
    fn canonical_mu_ratio() {
        let p = canonical(Dim::Two);
        let mu = solve_mu(&p).unwrap();
        assert!((mu[0] / mu[1] + 1.5).abs() < 1e-12);
        let p2 = DesignProblem { c: 2.0, ..p.clone() };
        let mu2 = solve_mu(&p2).unwrap();
        assert!((mu2[0] - 2.0 * mu[0]).abs() < 1e-12);
    }

    #[test]
    fn derivative_at_first_time_is_two_gamma_c() {
        let p = DesignProblem::new(Dim::Two, vec![0.3, 0.7, 1.1], 0.01, 2.0, 0.8).unwrap();
        let mu = solve_mu(&p).unwrap();
        let d = eval_deapp(&mu, p.gamma, p.times[0]);
        assert!((d / (2.0 * p.gamma * p.c) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn angle_rule_example() {
        let p = canonical(Dim::Two);
        let sol = solve_design(&p).unwrap();
        assert!(sol.mu[0] > 0.0);
        let a = sol.alphas[0];
        assert!((a[0] - 2.0 * (PI / 8.0).cos()).abs() < 1e-15 && (a[1] - 2.0 * (PI / 8.0).sin()).abs() < 1e-15);
        let expect = (sol.mu[0] * 4.0 / (a[0] * a[1])).sqrt();
        assert!((sol.lambdas[0] / expect - 1.0).abs() < 1e-14);
        assert!(verify_design(&sol, &p).passed);
    }

    #[test]
    fn paper_alphas_are_admissible() {
        let p = canonical(Dim::Two);
        let mu = solve_mu(&p).unwrap();
        let s = realize_with_alphas(&p, &mu, vec![[3f64.sqrt(), 1.0, 0.0], [6f64.sqrt(), -(2f64.sqrt()), 0.0]]).unwrap();
        assert!((s.lambdas[0].powi(2) / s.lambdas[1].powi(2) - 1.5).abs() < 1e-12);
        let p3 = canonical(Dim::Three);
        let mu3 = solve_mu(&p3).unwrap();
        let s3 = realize_with_alphas(&p3, &mu3, vec![[0.0, 1.0, 3f64.sqrt()], [0.0, 6f64.sqrt(), 2f64.sqrt()]]).unwrap();
        assert!((s3.lambdas[0].powi(2) / s3.lambdas[1].powi(2) - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_sign_direction_is_rejected() {
        let p = canonical(Dim::Two);
        let mu = solve_mu(&p).unwrap();
        let err = realize_with_alphas(&p, &mu, vec![[3f64.sqrt(), -1.0, 0.0], [6f64.sqrt(), -(2f64.sqrt()), 0.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn nearly_equal_times_are_ill_conditioned() {
        let p = DesignProblem::new(Dim::Two, vec![1.0, 1.0 + 1e-9], 1e-10, 4.0, 1.0).unwrap();
        assert!(matches!(solve_mu(&p), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn empty_times_rejected() {
        assert!(DesignProblem::new(Dim::Two, vec![], 0.1, 4.0, 1.0).is_err());
    }
}
