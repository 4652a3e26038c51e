//! Per-mode linear operators and the pseudo-spectral quadratic term.

use crate::error::{Error, Result};
use crate::fields::{forward_real, FieldFft, Grid, SpectralField};
use crate::geometry::Dim;
use num_complex::Complex64;

/// `e^{tΔ}`: multiply every mode by `e^{−t|k|²}`.
pub fn heat(field: &SpectralField, t: f64) -> Result<SpectralField> {
    let mut out = field.clone();
    heat_in_place(&mut out, t)?;
    out.time = field.time + t;
    Ok(out)
}

pub fn heat_in_place(field: &mut SpectralField, t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("heat semigroup needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(());
    }
    let g = field.grid;
    let mult: Vec<f64> = (0..g.len()).map(|f| (-t * crate::geometry::norm2(g.wavenumber(f))).exp()).collect();
    for c in field.comps.iter_mut() {
        c.iter_mut().zip(&mult).for_each(|(v, m)| *v *= *m);
    }
    Ok(())
}

/// `P = I − kkᵀ/|k|²` per mode; the zero mode passes through.
pub fn leray_project(field: &SpectralField) -> SpectralField {
    let mut out = field.clone();
    project_in_place(&mut out);
    out
}

pub fn project_in_place(field: &mut SpectralField) {
    let g = field.grid;
    let d = g.dim.n();
    for f in 0..g.len() {
        let k = g.wavenumber(f);
        let k2 = crate::geometry::norm2(k);
        if k2 == 0.0 {
            continue;
        }
        let mut kv = Complex64::default();
        for c in 0..d {
            kv += field.comps[c][f] * k[c];
        }
        let s = kv / k2;
        for c in 0..d {
            field.comps[c][f] -= s * k[c];
        }
    }
}

/// Index pairs `(i, j)`, `i ≤ j`, of a symmetric `d×d` tensor.
pub fn sym_pairs(dim: Dim) -> &'static [(usize, usize)] {
    match dim {
        Dim::Two => &[(0, 0), (0, 1), (1, 1)],
        Dim::Three => &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)],
    }
}

/// Precomputed transforms and masks for one grid.
#[derive(Debug, Clone)]
pub struct SpectralOps {
    pub grid: Grid,
    pub fft: FieldFft,
    pub k2: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SpectralOps {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            fft: FieldFft::new(grid.dim, grid.n),
            k2: (0..grid.len()).map(|f| crate::geometry::norm2(grid.wavenumber(f))).collect(),
            mask: (0..grid.len()).map(|f| grid.dealiased(f)).collect(),
        }
    }

    /// Physical samples of the dealiased part of `u`.
    pub fn physical(&self, u: &SpectralField) -> Vec<Vec<f64>> {
        let mut masked = u.clone();
        for c in masked.comps.iter_mut() {
            c.iter_mut().zip(&self.mask).for_each(|(v, &keep)| {
                if !keep {
                    *v = Complex64::default();
                }
            });
        }
        masked.to_physical(&self.fft)
    }

    /// `P∇·S` for a symmetric tensor given by its physical entries in
    /// [`sym_pairs`] order, truncated to the dealiased band.
    pub fn tensor_divergence(&self, entries: &[Vec<f64>]) -> SpectralField {
        let g = self.grid;
        let d = g.dim.n();
        let pairs = sym_pairs(g.dim);
        let hat = forward_real(g, &self.fft, entries, (g.length / g.n as f64).powi(d as i32));
        let mut out = SpectralField::zeros(g);
        for f in 0..g.len() {
            if !self.mask[f] {
                continue;
            }
            let k = g.wavenumber(f);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let s = hat[p][f];
                // (∇·S)_i = Σ_j i k_j S_ij.
                out.comps[i][f] += Complex64::new(-s.im, s.re) * k[j];
                if i != j {
                    out.comps[j][f] += Complex64::new(-s.im, s.re) * k[i];
                }
            }
        }
        project_in_place(&mut out);
        out
    }

    /// `P∇·(u⊗u)` with 2/3-rule dealiasing.
    pub fn nonlinear(&self, u: &SpectralField) -> SpectralField {
        let x = self.physical(u);
        let entries: Vec<Vec<f64>> = sym_pairs(self.grid.dim)
            .iter()
            .map(|&(i, j)| x[i].iter().zip(&x[j]).map(|(a, b)| a * b).collect())
            .collect();
        self.tensor_divergence(&entries).with_time(u.time)
    }

    /// `P∇·½(u⊗v + v⊗u)` with 2/3-rule dealiasing.
    pub fn nonlinear_sym(&self, u: &SpectralField, v: &SpectralField) -> SpectralField {
        let x = self.physical(u);
        let y = self.physical(v);
        let entries: Vec<Vec<f64>> = sym_pairs(self.grid.dim)
            .iter()
            .map(|&(i, j)| {
                x[i].iter()
                    .zip(&y[j])
                    .zip(x[j].iter().zip(&y[i]))
                    .map(|((a, b), (c, e))| 0.5 * (a * b + c * e))
                    .collect()
            })
            .collect();
        self.tensor_divergence(&entries).with_time(u.time)
    }

    /// Multiplies every mode by `e^{−t|k|²}`.
    pub fn heat_in_place(&self, u: &mut SpectralField, t: f64) {
        let mult: Vec<f64> = self.k2.iter().map(|q| (-t * q).exp()).collect();
        self.apply_multiplier(u, &mult);
    }

    pub fn apply_multiplier(&self, u: &mut SpectralField, mult: &[f64]) {
        for c in u.comps.iter_mut() {
            c.iter_mut().zip(mult).for_each(|(v, m)| *v *= *m);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{assemble_spectral, check_divergence_free, DatumSpec, ModulationTerm};
    use crate::profile::BumpProfile;

    fn datum() -> (DatumSpec, Grid) {
        let spec = DatumSpec::new(
            Dim::Two,
            0.25,
            1.0,
            vec![
                ModulationTerm { lambda: 1.0, alpha: [1.8, 0.7, 0.0] },
                ModulationTerm { lambda: 0.7, alpha: [2.4, -1.0, 0.0] },
            ],
            BumpProfile::standard(Dim::Two),
        )
        .unwrap();
        (spec, Grid::new(Dim::Two, 256, 128.0).unwrap())
    }

    #[test]
    fn heat_is_a_semigroup() {
        let (spec, g) = datum();
        let a = assemble_spectral(&spec, g).unwrap();
        assert_eq!(heat(&a, 0.0).unwrap(), a);
        let two = heat(&heat(&a, 0.1).unwrap(), 0.1).unwrap();
        let one = heat(&a, 0.2).unwrap();
        assert!(two.sub(&one).max_abs() <= 1e-14 * a.max_abs());
        assert!(heat(&a, -1.0).is_err());
        // Single mode with |k|² = 4 at t = ⅛ log 2.
        assert!(((-4.0 * 0.125 * 2f64.ln()).exp() - 2f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn projector_fixes_solenoidal_and_kills_gradients() {
        let (spec, g) = datum();
        let a = assemble_spectral(&spec, g).unwrap();
        assert!(leray_project(&a).sub(&a).max_abs() <= 1e-14 * a.max_abs());
        let mut grad = SpectralField::zeros(g);
        for f in 0..g.len() {
            let k = g.wavenumber(f);
            let s = Complex64::new((f as f64 * 0.1).cos(), (f as f64 * 0.3).sin()) * (-crate::geometry::norm2(k)).exp();
            for c in 0..2 {
                grad.comps[c][f] = Complex64::i() * k[c] * s;
            }
        }
        assert!(leray_project(&grad).max_abs() <= 1e-14 * grad.max_abs());
        let p = leray_project(&grad.clone());
        assert!(leray_project(&p).sub(&p).max_abs() <= 1e-14);
    }

    #[test]
    fn nonlinear_term_is_solenoidal_and_energy_neutral() {
        let (spec, g) = datum();
        let a = assemble_spectral(&spec, g).unwrap();
        let ops = SpectralOps::new(g);
        let n = ops.nonlinear(&a);
        assert!(n.max_abs() > 0.0);
        assert!(check_divergence_free(&n) <= 1e-12);
        let flux = a.inner(&n);
        assert!(flux.abs() <= 1e-10 * a.l2_norm() * n.l2_norm(), "{flux}");
        assert_eq!(ops.nonlinear(&SpectralField::zeros(g)).max_abs(), 0.0);
        // Symmetric form agrees with the quadratic one on the diagonal.
        assert!(ops.nonlinear_sym(&a, &a).sub(&n).max_abs() <= 1e-13 * n.max_abs());
    }
}
