//! Small fixed-size vector helpers shared by the 2D and 3D code paths.
//!
//! Vectors are always stored as `[f64; 3]`; in two dimensions the third
//! entry is zero and ignored.

use serde::{Deserialize, Serialize};
use std::fmt;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Spatial dimension. Only the plane and space are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub const fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.n() as f64
    }

    /// Area of the unit sphere `S^{d-1}`.
    pub fn sphere_area(self) -> f64 {
        match self {
            Dim::Two => 2.0 * std::f64::consts::PI,
            Dim::Three => 4.0 * std::f64::consts::PI,
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(format!("dimension must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.n() as u8
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.n())
    }
}

/// The coordinate permutation `α ↦ α̃`: a swap in the plane, a cyclic
/// shift `(α₁,α₂,α₃) ↦ (α₂,α₃,α₁)` in space. Applying it `d` times is the
/// identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TildeMap {
    dim: Dim,
}

impl TildeMap {
    pub fn new(dim: Dim) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Source index for each output slot: `tilde(v)[i] = v[source(i)]`.
    pub fn source(&self, i: usize) -> usize {
        match self.dim {
            Dim::Two => [1, 0, 2][i],
            Dim::Three => [1, 2, 0][i],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        [v[self.source(0)], v[self.source(1)], v[self.source(2)]]
    }

    pub fn apply_index<T: Copy>(&self, v: [T; 3]) -> [T; 3] {
        [v[self.source(0)], v[self.source(1)], v[self.source(2)]]
    }

    /// Component cycle paired with the coordinate map: `σ(m) = m + 1 mod d`.
    pub fn component_cycle(&self, m: usize) -> usize {
        (m + 1) % self.dim.n()
    }
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

pub fn norm(a: Vec3) -> f64 {
    norm2(a).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn neg(a: Vec3) -> Vec3 {
    scale(a, -1.0)
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Largest absolute entry of the leading `d×d` block.
pub fn mat_max_abs(m: &Mat3, dim: Dim) -> f64 {
    let d = dim.n();
    let mut out = 0.0_f64;
    for row in m.iter().take(d) {
        for v in row.iter().take(d) {
            out = out.max(v.abs());
        }
    }
    out
}

pub fn trace(m: &Mat3, dim: Dim) -> f64 {
    (0..dim.n()).map(|i| m[i][i]).sum()
}
