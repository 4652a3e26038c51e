//! Fixed-order quadrature rules used throughout the crate.
//!
//! Gauss–Legendre nodes come from `gauss-quad`; the adaptive radial rule is
//! the double-exponential scheme from `quadrature`. Everything here is
//! deterministic.

use crate::error::{Error, Result};
use crate::geometry::{Dim, Vec3};
use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(points: usize) -> Result<Self> {
        let rule = GaussLegendre::new(points)
            .map_err(|_| Error::under_resolved("quadrature points", "need at least 2"))?;
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule: `panels` equal sub-intervals of `[a, b]`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.len());
        for p in 0..panels {
            let lo = a + p as f64 * h;
            out.extend(self.on(lo, lo + h));
        }
        out
    }

    /// Tensor-product nodes on the axis-aligned box `center ± half_width`.
    pub fn tensor_box(&self, dim: Dim, center: Vec3, half_width: f64) -> Vec<(Vec3, f64)> {
        let axis: Vec<Vec<(f64, f64)>> = (0..dim.n())
            .map(|a| self.on(center[a] - half_width, center[a] + half_width).collect())
            .collect();
        let mut out = Vec::with_capacity(self.len().pow(dim.n() as u32));
        match dim {
            Dim::Two => {
                for &(x, wx) in &axis[0] {
                    for &(y, wy) in &axis[1] {
                        out.push(([x, y, 0.0], wx * wy));
                    }
                }
            }
            Dim::Three => {
                for &(x, wx) in &axis[0] {
                    for &(y, wy) in &axis[1] {
                        for &(z, wz) in &axis[2] {
                            out.push(([x, y, z], wx * wy * wz));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Composite Simpson weights for `intervals` equal steps of size `h`.
///
/// An odd number of intervals is handled with a 3/8 rule on the first three
/// intervals. A single interval falls back to the trapezoid rule.
pub fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let start = if intervals % 2 == 1 {
                let c = 3.0 * h / 8.0;
                w[0] += c;
                w[1] += 3.0 * c;
                w[2] += 3.0 * c;
                w[3] += c;
                3
            } else {
                0
            };
            let mut i = start;
            while i + 2 <= intervals {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
                i += 2;
            }
        }
    }
    w
}

/// Adaptive integral of a smooth function on `[a, b]` to the given absolute
/// tolerance.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, tol).integral
}

/// Least-squares line fit `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_polynomials() {
        let r = GaussRule::new(5).unwrap();
        let v = r.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_weights_integrate_cubics_exactly() {
        for n in [2usize, 3, 4, 5, 8, 9] {
            let h = 1.0 / n as f64;
            let w = simpson_weights(n, h);
            let v: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 * h).powi(3)).sum();
            assert!((v - 0.25).abs() < 1e-14, "n={n}: {v}");
        }
    }

    #[test]
    fn tensor_box_weights_sum_to_volume() {
        let r = GaussRule::new(6).unwrap();
        let s: f64 = r.tensor_box(Dim::Three, [1.0, 2.0, 3.0], 0.5).iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [1.0, -1.0, -3.0];
        let (s, c) = linear_fit(&xs, &ys).unwrap();
        assert!((s + 2.0).abs() < 1e-14 && (c - 3.0).abs() < 1e-14);
    }
}
