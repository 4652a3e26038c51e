//! Picard series of the mild formulation `u = e^{tΔ}a + B(u, u)`:
//! `T₁ = e^{tΔ}a`, `T_k = Σ_{l<k} B(T_l, T_{k−l})`.
//!
//! All orders are advanced together on a uniform time grid. The Duhamel
//! integral `∫₀ᵗ e^{(t−s)Δ}F(s) ds` is evaluated per mode with the heat
//! factor folded into the weights: Simpson's rule on pairs of steps,
//! started by a 3/8 rule and a four-point rule for the first step. Only a
//! few history levels are kept per order, so memory does not grow with
//! the number of steps.

use super::{sym_pairs, SpectralOps};
use crate::error::{Error, Result};
use crate::fields::SpectralField;
use crate::quadrature::simpson_weights;
use num_complex::Complex64;

pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Clone)]
pub struct PicardSeries {
    pub h: f64,
    pub steps: usize,
    pub order: usize,
    /// Node indices whose terms were retained.
    pub retained: Vec<usize>,
    /// `terms[k−1][r]` is `T_k` at node `retained[r]`.
    pub terms: Vec<Vec<SpectralField>>,
    /// `norms[k−1][n] = ‖T_k(t_n)‖_{L²}` at every node.
    pub norms: Vec<Vec<f64>>,
}

/// `Σ_l T_l ⊗ T_{k−l}` in physical space, symmetric-entry order.
fn product_entries(phys: &[Vec<Vec<f64>>], k: usize, dim: crate::geometry::Dim) -> Vec<Vec<f64>> {
    let len = phys[0][0].len();
    sym_pairs(dim)
        .iter()
        .map(|&(i, j)| {
            let mut e = vec![0.0; len];
            for l in 1..k {
                let (a, b) = (&phys[l - 1][i], &phys[k - l - 1][j]);
                e.iter_mut().zip(a.iter().zip(b)).for_each(|(s, (x, y))| *s += x * y);
            }
            e
        })
        .collect()
}

/// `out = Σ_r c_r(q)·F_r`, with per-mode weights.
fn weighted_sum(out: &mut SpectralField, parts: &[(&SpectralField, &[f64])]) {
    for c in 0..out.comps.len() {
        for f in 0..out.comps[c].len() {
            let mut acc = Complex64::default();
            for (field, w) in parts {
                acc += field.comps[c][f] * w[f];
            }
            out.comps[c][f] = acc;
        }
    }
}

impl PicardSeries {
    /// Terms `T₁..T_order` on the nodes `n·h`, `n = 0..=steps`.
    ///
    /// `retain` lists the node indices to keep (`None` keeps all).
    pub fn compute(
        datum: &SpectralField,
        h: f64,
        steps: usize,
        order: usize,
        max_order: usize,
        retain: Option<&[usize]>,
    ) -> Result<Self> {
        if order == 0 || order > max_order {
            return Err(Error::Config(format!("Picard order {order} outside 1..={max_order}")));
        }
        if steps < 3 {
            return Err(Error::Config("Picard integration needs at least 3 steps".into()));
        }
        if !(h > 0.0) {
            return Err(Error::Config(format!("Picard step must be positive, got {h}")));
        }
        let g = datum.grid;
        let ops = SpectralOps::new(g);
        let qmax = ops.k2.iter().cloned().fold(0.0, f64::max);
        if h * qmax > 2.0 {
            return Err(Error::under_resolved(
                "dt",
                format!("h·max|k|² = {:.2} is too large for the Duhamel start-up rule", h * qmax),
            ));
        }
        let keep: Vec<usize> = match retain {
            Some(r) => r.to_vec(),
            None => (0..=steps).collect(),
        };
        let decay = |m: f64| -> Vec<f64> { ops.k2.iter().map(|q| (-m * h * q).exp()).collect() };
        let (e1, e2, e3) = (decay(1.0), decay(2.0), decay(3.0));
        let (g1, g2) = (decay(-1.0), decay(-2.0));
        let scaled = |v: &[f64], s: f64| -> Vec<f64> { v.iter().map(|x| x * s).collect() };
        let ones = vec![1.0; g.len()];

        let mut series = Self {
            h,
            steps,
            order,
            retained: keep.clone(),
            terms: vec![Vec::new(); order],
            norms: vec![Vec::with_capacity(steps + 1); order],
        };
        let heat_at = |n: usize| -> SpectralField {
            let mut t1 = datum.clone();
            ops.heat_in_place(&mut t1, n as f64 * h);
            t1.time = datum.time + n as f64 * h;
            t1
        };
        // Forcing F_k(n) = −P∇·Σ T_l⊗T_{k−l}(n).
        let forcing = |phys: &[Vec<Vec<f64>>], k: usize, time: f64| -> SpectralField {
            let mut f = ops.tensor_divergence(&product_entries(phys, k, g.dim));
            f.scale(-1.0);
            f.time = time;
            f
        };

        // Start-up block: nodes 0..=3, order by order.
        let mut block: Vec<Vec<SpectralField>> = vec![(0..4).map(heat_at).collect()];
        let mut block_phys: Vec<Vec<Vec<Vec<f64>>>> = vec![block[0].iter().map(|t| ops.physical(t)).collect()];
        let mut hist_f: Vec<[SpectralField; 2]> = Vec::new();
        let mut hist_d: Vec<[SpectralField; 2]> = Vec::new();
        for k in 2..=order {
            let f: Vec<SpectralField> = (0..4)
                .map(|n| {
                    let phys: Vec<Vec<Vec<f64>>> = (0..k - 1).map(|l| block_phys[l][n].clone()).collect();
                    forcing(&phys, k, datum.time + n as f64 * h)
                })
                .collect();
            let mut d = vec![SpectralField::zeros(g).with_time(datum.time); 4];
            let w1 = [scaled(&e1, 9.0 * h / 24.0), scaled(&ones, 19.0 * h / 24.0), scaled(&g1, -5.0 * h / 24.0), scaled(&g2, h / 24.0)];
            weighted_sum(&mut d[1], &[(&f[0], &w1[0]), (&f[1], &w1[1]), (&f[2], &w1[2]), (&f[3], &w1[3])]);
            let w2 = [scaled(&e2, h / 3.0), scaled(&e1, 4.0 * h / 3.0), scaled(&ones, h / 3.0)];
            weighted_sum(&mut d[2], &[(&f[0], &w2[0]), (&f[1], &w2[1]), (&f[2], &w2[2])]);
            let w3 = [scaled(&e3, 3.0 * h / 8.0), scaled(&e2, 9.0 * h / 8.0), scaled(&e1, 9.0 * h / 8.0), scaled(&ones, 3.0 * h / 8.0)];
            weighted_sum(&mut d[3], &[(&f[0], &w3[0]), (&f[1], &w3[1]), (&f[2], &w3[2]), (&f[3], &w3[3])]);
            for (n, dn) in d.iter_mut().enumerate() {
                dn.time = datum.time + n as f64 * h;
            }
            if k < order {
                block_phys.push(d.iter().map(|t| ops.physical(t)).collect());
            }
            hist_f.push([f[2].clone(), f[3].clone()]);
            hist_d.push([d[2].clone(), d[3].clone()]);
            block.push(d);
        }
        for n in 0..4.min(steps + 1) {
            for k in 0..order {
                series.record(k, n, &block[k][n]);
            }
        }
        drop(block_phys);

        let w_prev2 = scaled(&e2, h / 3.0);
        let w_prev1 = scaled(&e1, 4.0 * h / 3.0);
        let w_cur = scaled(&ones, h / 3.0);
        for n in 4..=steps {
            let t = datum.time + n as f64 * h;
            let t1 = heat_at(n);
            let mut phys = vec![ops.physical(&t1)];
            series.record(0, n, &t1);
            for k in 2..=order {
                let idx = k - 2;
                let f_n = forcing(&phys, k, t);
                let [d_prev2, d_prev1] = &hist_d[idx];
                let [f_prev2, f_prev1] = &hist_f[idx];
                let mut d_n = SpectralField::zeros(g).with_time(t);
                weighted_sum(
                    &mut d_n,
                    &[(d_prev2, &e2), (f_prev2, &w_prev2), (f_prev1, &w_prev1), (&f_n, &w_cur)],
                );
                if k < order {
                    phys.push(ops.physical(&d_n));
                }
                series.record(k - 1, n, &d_n);
                let d_prev1 = d_prev1.clone();
                let f_prev1 = f_prev1.clone();
                hist_d[idx] = [d_prev1, d_n];
                hist_f[idx] = [f_prev1, f_n];
            }
        }
        Ok(series)
    }

    fn record(&mut self, k: usize, n: usize, field: &SpectralField) {
        self.norms[k].push(field.l2_norm());
        if self.retained.contains(&n) {
            self.terms[k].push(field.clone());
        }
    }

    /// `T_k` at node `n`, if retained.
    pub fn term(&self, k: usize, n: usize) -> Option<&SpectralField> {
        let r = self.retained.iter().position(|&m| m == n)?;
        self.terms.get(k.checked_sub(1)?)?.get(r)
    }

    /// `Σ_{k ≤ upto} T_k` at node `n`.
    pub fn partial_sum(&self, n: usize, upto: usize) -> Option<SpectralField> {
        let mut acc = self.term(1, n)?.clone();
        for k in 2..=upto.min(self.order) {
            acc.axpy(1.0, self.term(k, n)?);
        }
        Some(acc)
    }

    /// `max_n ‖T_k(t_n)‖` for each order.
    pub fn max_norms(&self) -> Vec<f64> {
        self.norms.iter().map(|v| v.iter().cloned().fold(0.0, f64::max)).collect()
    }
}

/// All nodes of `T_k` on `n·h`, `n = 0..=steps`.
pub fn picard_term(k: usize, datum: &SpectralField, h: f64, steps: usize) -> Result<Vec<SpectralField>> {
    let s = PicardSeries::compute(datum, h, steps, k, DEFAULT_MAX_ORDER, None)?;
    Ok(s.terms.into_iter().nth(k - 1).unwrap_or_default())
}

/// `B(u, v)(t) = −∫₀ᵗ e^{(t−s)Δ} P∇·(u⊗v)(s) ds` for trajectories sampled
/// on a common uniform grid starting at 0 (symmetrized tensor product,
/// composite Simpson in `s`).
pub fn bilinear_b(u: &[SpectralField], v: &[SpectralField], t: f64) -> Result<SpectralField> {
    let (Some(u0), Some(v0)) = (u.first(), v.first()) else {
        return Err(Error::Config("empty trajectory".into()));
    };
    u0.same_grid(v0)?;
    let g = u0.grid;
    if t == 0.0 {
        return Ok(SpectralField::zeros(g));
    }
    if u.len() < 2 || v.len() < 2 {
        return Err(Error::Config("trajectories need at least two samples".into()));
    }
    let h = u[1].time - u[0].time;
    let n = (t / h).round() as usize;
    if n >= u.len() || n >= v.len() || ((n as f64) * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Config(format!("t = {t} is not a sample time of both trajectories")));
    }
    let ops = SpectralOps::new(g);
    let w = simpson_weights(n, h);
    let mut out = SpectralField::zeros(g).with_time(t);
    for i in 0..=n {
        u[i].same_grid(&v[i])?;
        let mut term = ops.nonlinear_sym(&u[i], &v[i]);
        ops.heat_in_place(&mut term, t - i as f64 * h);
        out.axpy(-w[i], &term);
    }
    Ok(out)
}
