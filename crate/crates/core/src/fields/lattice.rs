//! Periodic lattice fields: `û(k)` for `k ∈ (2π/L)Z^d`, `N` modes per axis.
//!
//! Coefficients are samples of the continuum Fourier transform, so
//! `u(x_j) = L^{−d} Σ_k û(k) e^{ik·x_j}` and `∫ u·v dx = L^{−d} Σ_k Re(û·conj v̂)`.
//! Storage is row-major over the multi-index `(i₀, i₁[, i₂])`, with index
//! `i` standing for the wavenumber `(2π/L)·(i if i < N/2 else i − N)`.

use super::{box_indices, DatumSpec, FieldFft};
use crate::error::{Error, Result};
use crate::geometry::{self, Dim, TildeMap, Vec3};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Minimum number of lattice spacings per bump radius.
pub const MIN_POINTS_PER_DELTA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: Dim,
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(dim: Dim, n: usize, length: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::under_resolved("N", format!("points per dimension must be even and >= 4, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidDatum(format!("box length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim.n() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    #[inline]
    pub fn wrap(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Signed multi-index of a flat position (third entry 0 in 2D).
    #[inline]
    pub fn multi(&self, flat: usize) -> [i64; 3] {
        let n = self.n;
        match self.dim {
            Dim::Two => [self.wrap(flat / n), self.wrap(flat % n), 0],
            Dim::Three => [self.wrap(flat / (n * n)), self.wrap((flat / n) % n), self.wrap(flat % n)],
        }
    }

    /// Flat position of a signed multi-index, if it is stored.
    #[inline]
    pub fn flat(&self, m: [i64; 3]) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let mut out = 0usize;
        for &v in m.iter().take(self.dim.n()) {
            if v < -half || v >= half {
                return None;
            }
            out = out * self.n + v.rem_euclid(self.n as i64) as usize;
        }
        Some(out)
    }

    #[inline]
    pub fn wavenumber(&self, flat: usize) -> Vec3 {
        let m = self.multi(flat);
        let dk = self.dk();
        [m[0] as f64 * dk, m[1] as f64 * dk, m[2] as f64 * dk]
    }

    /// Flat position of `−k` (periodic).
    #[inline]
    pub fn negate(&self, flat: usize) -> usize {
        let n = self.n;
        let neg = |i: usize| (n - i) % n;
        match self.dim {
            Dim::Two => neg(flat / n) * n + neg(flat % n),
            Dim::Three => (neg(flat / (n * n)) * n + neg((flat / n) % n)) * n + neg(flat % n),
        }
    }

    /// Whether the mode survives the 2/3 dealiasing rule (`3|m_a| < N` on every axis).
    #[inline]
    pub fn dealiased(&self, flat: usize) -> bool {
        let m = self.multi(flat);
        let n = self.n as i64;
        m.iter().take(self.dim.n()).all(|v| 3 * v.abs() < n)
    }

    /// Largest wavenumber kept by the dealiasing rule on each axis.
    pub fn dealiased_cutoff(&self) -> f64 {
        ((self.n as i64 - 1) / 3) as f64 * self.dk()
    }

    /// Physical coordinate of grid node `j` along an axis, centered so the
    /// origin sits at index 0 and the range is `[−L/2, L/2)`.
    #[inline]
    pub fn coordinate(&self, j: usize) -> f64 {
        self.wrap(j) as f64 * self.length / self.n as f64
    }

    pub fn position(&self, flat: usize) -> Vec3 {
        let m = self.multi(flat);
        let h = self.length / self.n as f64;
        [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h]
    }

    /// Checks that the spec's bump supports are resolved by this grid and
    /// sit inside the dealiased band.
    pub fn check_resolves(&self, spec: &DatumSpec) -> Result<()> {
        if spec.dim != self.dim {
            return Err(Error::GridMismatch(format!("spec is {}D, grid is {}D", spec.dim, self.dim)));
        }
        if self.dk() > spec.delta / MIN_POINTS_PER_DELTA {
            return Err(Error::under_resolved(
                "L",
                format!(
                    "lattice spacing 2*pi/L = {:.4} exceeds delta/{MIN_POINTS_PER_DELTA} = {:.4}; increase L",
                    self.dk(),
                    spec.delta / MIN_POINTS_PER_DELTA
                ),
            ));
        }
        let extent = spec
            .bump_centers()
            .iter()
            .map(|b| b.center.iter().take(self.dim.n()).fold(0.0_f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
            + spec.delta;
        if extent >= self.dealiased_cutoff() {
            return Err(Error::under_resolved(
                "N",
                format!(
                    "datum reaches wavenumber {extent:.4} per axis but the dealiased band ends at {:.4}; increase N",
                    self.dealiased_cutoff()
                ),
            ));
        }
        Ok(())
    }
}

/// A lattice wavenumber inside some bump ball with the datum value there.
#[derive(Debug, Clone, Copy)]
pub struct LatticePoint {
    pub index: [i64; 3],
    pub k: Vec3,
    pub value: [Complex64; 3],
}

/// All points of `(2π/L)Z^d` lying strictly inside a bump ball of the spec.
pub fn lattice_support(spec: &DatumSpec, dk: f64) -> Vec<LatticePoint> {
    let d = spec.dim.n();
    let mut indices: Vec<[i64; 3]> = spec
        .bump_centers()
        .par_iter()
        .flat_map_iter(|b| {
            let mut lo = [0i64; 3];
            let mut hi = [1i64; 3];
            for a in 0..d {
                lo[a] = ((b.center[a] - spec.delta) / dk).floor() as i64;
                hi[a] = ((b.center[a] + spec.delta) / dk).ceil() as i64 + 1;
            }
            let center = b.center;
            box_indices(lo, hi).filter(move |m| {
                let k = [m[0] as f64 * dk, m[1] as f64 * dk, m[2] as f64 * dk];
                geometry::norm2(geometry::sub(k, center)) < spec.delta * spec.delta
            })
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    indices
        .into_par_iter()
        .map(|index| {
            let k = [index[0] as f64 * dk, index[1] as f64 * dk, index[2] as f64 * dk];
            LatticePoint { index, k, value: spec.datum_hat(k) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub time: f64,
    pub comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            time: 0.0,
            comps: vec![vec![Complex64::default(); grid.len()]; grid.dim.n()],
        }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn dim(&self) -> Dim {
        self.grid.dim
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// `∫ u_r u_c dx` for every component pair, by discrete Plancherel.
    pub fn second_moments(&self) -> [[f64; 3]; 3] {
        let d = self.dim().n();
        let norm = self.grid.length.powi(d as i32);
        let mut m = [[0.0; 3]; 3];
        for r in 0..d {
            for c in r..d {
                let s: f64 = self.comps[r]
                    .iter()
                    .zip(&self.comps[c])
                    .map(|(a, b)| a.re * b.re + a.im * b.im)
                    .sum();
                m[r][c] = s / norm;
                m[c][r] = m[r][c];
            }
        }
        m
    }

    /// `∫ u·v dx`.
    pub fn inner(&self, other: &Self) -> f64 {
        let norm = self.grid.length.powi(self.dim().n() as i32);
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>())
            .sum::<f64>()
            / norm
    }

    /// `½ ∫ |u|² dx`.
    pub fn energy(&self) -> f64 {
        0.5 * self.inner(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scale(&mut self, s: f64) {
        self.comps.iter_mut().flatten().for_each(|v| *v *= s);
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y * s);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest violation of `û(−k) = conj û(k)` relative to `max|û|`.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let g = self.grid;
        let mut worst = 0.0_f64;
        for c in &self.comps {
            for (f, v) in c.iter().enumerate() {
                let m = g.multi(f);
                // Nyquist planes have no partner inside the stored lattice.
                if m.iter().take(g.dim.n()).any(|&x| x == -(g.n as i64 / 2)) {
                    continue;
                }
                worst = worst.max((v - c[g.negate(f)].conj()).norm());
            }
        }
        worst / scale
    }

    /// Physical-space samples of every component.
    pub fn to_physical(&self, fft: &FieldFft) -> Vec<Vec<f64>> {
        let d = self.dim().n();
        let scale = 1.0 / self.grid.length.powi(d as i32);
        let mut out = Vec::with_capacity(d);
        let mut c = 0;
        while c < d {
            let pair = c + 1 < d;
            let mut buf: Vec<Complex64> = if pair {
                self.comps[c]
                    .iter()
                    .zip(&self.comps[c + 1])
                    .map(|(a, b)| a + Complex64::i() * b)
                    .collect()
            } else {
                self.comps[c].clone()
            };
            fft.inverse(&mut buf);
            out.push(buf.iter().map(|v| v.re * scale).collect());
            if pair {
                out.push(buf.iter().map(|v| v.im * scale).collect());
            }
            c += if pair { 2 } else { 1 };
        }
        out
    }

    /// Fourier coefficients of real physical samples.
    pub fn from_physical(grid: Grid, fft: &FieldFft, comps: &[Vec<f64>]) -> Self {
        let scale = (grid.length / grid.n as f64).powi(grid.dim.n() as i32);
        Self {
            grid,
            time: 0.0,
            comps: forward_real(grid, fft, comps, scale),
        }
    }
}

/// Forward transforms of real arrays, two at a time through one complex FFT.
pub(crate) fn forward_real(grid: Grid, fft: &FieldFft, fields: &[Vec<f64>], scale: f64) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(fields.len());
    let mut c = 0;
    while c < fields.len() {
        if c + 1 < fields.len() {
            let mut z: Vec<Complex64> = fields[c]
                .iter()
                .zip(&fields[c + 1])
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect();
            fft.forward(&mut z);
            let (mut f, mut g) = (vec![Complex64::default(); z.len()], vec![Complex64::default(); z.len()]);
            for i in 0..z.len() {
                let zm = z[grid.negate(i)].conj();
                f[i] = (z[i] + zm) * (0.5 * scale);
                g[i] = (z[i] - zm) * Complex64::new(0.0, -0.5 * scale);
            }
            out.push(f);
            out.push(g);
            c += 2;
        } else {
            let mut z: Vec<Complex64> = fields[c].iter().map(|&a| Complex64::new(a, 0.0)).collect();
            fft.forward(&mut z);
            z.iter_mut().for_each(|v| *v *= scale);
            out.push(z);
            c += 1;
        }
    }
    out
}

/// Samples the datum on the lattice of `grid`.
pub fn assemble_spectral(spec: &DatumSpec, grid: Grid) -> Result<SpectralField> {
    grid.check_resolves(spec)?;
    let mut field = SpectralField::zeros(grid);
    if spec.eta == 0.0 || spec.terms.iter().all(|t| t.lambda == 0.0) {
        return Ok(field);
    }
    for p in lattice_support(spec, grid.dk()) {
        let flat = grid
            .flat(p.index)
            .ok_or_else(|| Error::under_resolved("N", "bump support leaves the stored lattice"))?;
        for c in 0..grid.dim.n() {
            field.comps[c][flat] = p.value[c];
        }
    }
    Ok(field)
}

/// `max_k |k·û(k)| / max_k |û(k)|`; zero for the zero field.
pub fn check_divergence_free(field: &SpectralField) -> f64 {
    let scale = field.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let g = field.grid;
    let d = g.dim.n();
    let worst = (0..g.len())
        .into_par_iter()
        .map(|f| {
            let k = g.wavenumber(f);
            let mut div = Complex64::default();
            for c in 0..d {
                div += field.comps[c][f] * k[c];
            }
            div.norm()
        })
        .reduce(|| 0.0, f64::max);
    worst / scale
}

/// `max_{k,m} |û_m(k̃) − û_{σ(m)}(k)|`, the defect of the rotational symmetry
/// `ã(x) = a(x̃)`; `σ` is the component cycle of [`TildeMap`].
pub fn check_symmetry(field: &SpectralField) -> f64 {
    let g = field.grid;
    let tilde = TildeMap::new(g.dim);
    let d = g.dim.n();
    (0..g.len())
        .into_par_iter()
        .map(|f| {
            let m = g.multi(f);
            let Some(ft) = g.flat(tilde.apply_index(m)) else {
                return 0.0;
            };
            (0..d)
                .map(|c| (field.comps[c][ft] - field.comps[tilde.component_cycle(c)][f]).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ModulationTerm;
    use crate::profile::BumpProfile;

    fn spec2() -> DatumSpec {
        DatumSpec::new(
            Dim::Two,
            0.25,
            1.0,
            vec![
                ModulationTerm { lambda: 0.8, alpha: [1.8, 0.7, 0.0] },
                ModulationTerm { lambda: -0.5, alpha: [2.6, -1.0, 0.0] },
            ],
            BumpProfile::standard(Dim::Two),
        )
        .unwrap()
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(Dim::Three, 8, 10.0).unwrap();
        for f in 0..g.len() {
            assert_eq!(g.flat(g.multi(f)), Some(f));
            assert_eq!(g.negate(g.negate(f)), f);
        }
    }

    #[test]
    fn assembled_datum_is_divergence_free_symmetric_and_real() {
        let g = Grid::new(Dim::Two, 256, 128.0).unwrap();
        let u = assemble_spectral(&spec2(), g).unwrap();
        assert!(u.max_abs() > 0.0);
        assert!(check_divergence_free(&u) <= 1e-12);
        assert!(check_symmetry(&u) <= 1e-12);
        assert!(u.conjugate_symmetry_residual() <= 1e-14);
        let mut broken = u.clone();
        broken.comps[1].iter_mut().for_each(|v| *v = Complex64::default());
        assert!(check_symmetry(&broken) > 0.0);
        assert_eq!(check_symmetry(&SpectralField::zeros(g)), 0.0);
    }

    #[test]
    fn under_resolved_grids_are_rejected() {
        let coarse = Grid::new(Dim::Two, 128, 32.0).unwrap();
        let err = assemble_spectral(&spec2(), coarse).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { ref parameter, .. } if parameter == "L"), "{err}");
        let small = Grid::new(Dim::Two, 64, 128.0).unwrap();
        let err = assemble_spectral(&spec2(), small).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { ref parameter, .. } if parameter == "N"), "{err}");
    }

    #[test]
    fn physical_round_trip_preserves_coefficients() {
        let g = Grid::new(Dim::Two, 256, 128.0).unwrap();
        let u = assemble_spectral(&spec2(), g).unwrap();
        let fft = FieldFft::new(g.dim, g.n);
        let x = u.to_physical(&fft);
        let back = SpectralField::from_physical(g, &fft, &x);
        assert!(back.sub(&u).max_abs() < 1e-12 * u.max_abs());
        // Parseval between the two representations.
        let h2 = (g.length / g.n as f64).powi(2);
        let phys: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() * h2;
        assert!((phys / u.inner(&u) - 1.0).abs() < 1e-12);
    }
}
