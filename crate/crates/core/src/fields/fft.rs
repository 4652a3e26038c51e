//! Multi-dimensional complex FFTs on row-major `N^d` lattices.
//!
//! Transforms are unnormalized, matching `rustfft`. Strided axes are
//! gathered in blocks of lines into a contiguous scratch buffer so every
//! 1D transform runs on contiguous memory.

use crate::geometry::Dim;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

const BLOCK: usize = 16;

#[derive(Clone)]
pub struct FieldFft {
    dim: Dim,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FieldFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldFft").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl FieldFft {
    pub fn new(dim: Dim, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim.n() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `Σ_j f_j e^{−2πi j·m/N}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, FftDirection::Forward);
    }

    /// `Σ_m f_m e^{+2πi j·m/N}`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, FftDirection::Inverse);
    }

    fn run(&self, data: &mut [Complex64], dir: FftDirection) {
        assert_eq!(data.len(), self.len(), "lattice size mismatch");
        let fft = match dir {
            FftDirection::Forward => &self.forward,
            FftDirection::Inverse => &self.inverse,
        };
        let n = self.n;
        let d = self.dim.n();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // Last axis is contiguous.
        fft.process_with_scratch(data, &mut scratch);
        let mut buf = vec![Complex64::default(); BLOCK * n];
        for axis in 0..d - 1 {
            let stride = n.pow((d - 1 - axis) as u32);
            let outer_count = data.len() / (n * stride);
            for outer in 0..outer_count {
                let base = outer * n * stride;
                let mut inner0 = 0;
                while inner0 < stride {
                    let b = BLOCK.min(stride - inner0);
                    for i in 0..n {
                        let row = base + i * stride + inner0;
                        for k in 0..b {
                            buf[k * n + i] = data[row + k];
                        }
                    }
                    fft.process_with_scratch(&mut buf[..b * n], &mut scratch);
                    for i in 0..n {
                        let row = base + i * stride + inner0;
                        for k in 0..b {
                            data[row + k] = buf[k * n + i];
                        }
                    }
                    inner0 += b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(dim: Dim, n: usize, data: &[Complex64], sign: f64) -> Vec<Complex64> {
        let d = dim.n();
        let idx = |flat: usize| -> Vec<usize> { (0..d).rev().map(|a| (flat / n.pow(a as u32)) % n).collect() };
        (0..data.len())
            .map(|m| {
                let mm = idx(m);
                data.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let jj = idx(j);
                        let phase: f64 = (0..d).map(|a| (mm[a] * jj[a]) as f64).sum::<f64>() * 2.0 * PI / n as f64;
                        v * Complex64::from_polar(1.0, sign * phase)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_dft() {
        for (dim, n) in [(Dim::Two, 6usize), (Dim::Three, 4), (Dim::Two, 20)] {
            let len = n.pow(dim.n() as u32);
            let data: Vec<Complex64> = (0..len)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
                .collect();
            let fft = FieldFft::new(dim, n);
            let mut f = data.clone();
            fft.forward(&mut f);
            let oracle = naive(dim, n, &data, -1.0);
            for (a, b) in f.iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-10);
            }
            fft.inverse(&mut f);
            for (a, b) in f.iter().zip(&data) {
                assert!((a / len as f64 - b).norm() < 1e-12);
            }
        }
    }
}
