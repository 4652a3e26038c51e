//! TOML configuration of the end-to-end pipeline, with per-dimension
//! defaults filled in by [`PipelineConfig::resolve`].
//!
//! ```toml
//! [design]
//! dimension = 2
//! times = [0.0866433975699932]
//! epsilon = 0.02
//! gamma = 4.0
//! directions = "rule"      # or "example"
//!
//! [datum]
//! delta = 0.25
//! # eta = 14.0             # omit to calibrate
//!
//! [grid]
//! length = 128.0
//! points = 512
//!
//! [simulation]
//! dt = 1e-3
//!
//! [farfield]
//! tolerance = 1e-6
//! ```

use crate::design::{default_epsilon, DesignProblem, Directions};
use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::geometry::Dim;
use crate::profile::BumpProfile;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `⅛ log 2`, the concentration time of the explicit example.
pub fn example_time() -> f64 {
    0.125 * 2f64.ln()
}

pub fn default_delta(dim: Dim) -> f64 {
    match dim {
        Dim::Two => 0.25,
        Dim::Three => 0.5,
    }
}

/// `(L, N)`.
pub fn default_grid(dim: Dim) -> (f64, usize) {
    match dim {
        Dim::Two => (128.0, 512),
        Dim::Three => (60.0, 96),
    }
}

pub fn default_dt(dim: Dim) -> f64 {
    match dim {
        Dim::Two => 1e-3,
        Dim::Three => 2e-3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub dimension: Dim,
    pub times: Vec<f64>,
    pub epsilon: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `None` normalizes so that `max|μ| = 1`.
    pub c: Option<f64>,
    #[serde(default)]
    pub directions: Directions,
}

fn default_gamma() -> f64 {
    4.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSection {
    pub delta: Option<f64>,
    /// `None` calibrates the amplitude.
    pub eta: Option<f64>,
    pub profile: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub length: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: Option<f64>,
    /// Defaults to `t_N + t₁`.
    pub t_end: Option<f64>,
    pub snapshot_stride: Option<usize>,
    pub target_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarfieldSection {
    pub tolerance: Option<f64>,
    pub samples: Option<usize>,
    pub threshold: Option<f64>,
    /// Offset from each zero at which the generic decay is checked.
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub design: DesignSection,
    #[serde(default)]
    pub datum: DatumSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub farfield: FarfieldSection,
}

/// A configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub problem: DesignProblem,
    pub directions: Directions,
    pub delta: f64,
    pub eta: Option<f64>,
    pub profile: String,
    pub length: f64,
    pub points: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub target_fraction: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub threshold: f64,
    pub offset: f64,
}

impl PipelineConfig {
    /// The explicit single-time example at desk-scale defaults.
    pub fn example(dim: Dim) -> Self {
        Self {
            design: DesignSection {
                dimension: dim,
                times: vec![example_time()],
                epsilon: Some(0.02),
                gamma: 4.0,
                c: None,
                directions: Directions::Example,
            },
            datum: DatumSection::default(),
            grid: GridSection::default(),
            simulation: SimulationSection::default(),
            farfield: FarfieldSection::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills defaults and validates everything that can be checked without
    /// building the datum.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let d = &self.design;
        let dim = d.dimension;
        let problem = match d.c {
            Some(c) => {
                let eps = d.epsilon.unwrap_or_else(|| default_epsilon(&d.times));
                DesignProblem::new(dim, d.times.clone(), eps, d.gamma, c)?
            }
            None => DesignProblem::normalized(dim, d.times.clone(), d.epsilon, d.gamma)?,
        };
        let profile = self.datum.profile.clone().unwrap_or_else(|| "standard".into());
        BumpProfile::named(&profile, dim)?;
        let delta = self.datum.delta.unwrap_or_else(|| default_delta(dim));
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        if let Some(eta) = self.datum.eta {
            if !eta.is_finite() {
                return Err(Error::Config("eta must be finite".into()));
            }
        }
        let (l0, n0) = default_grid(dim);
        let length = self.grid.length.unwrap_or(l0);
        let points = self.grid.points.unwrap_or(n0);
        Grid::new(dim, points, length)?;
        let t_last = *problem.times.last().expect("validated nonempty");
        let t_end = self.simulation.t_end.unwrap_or(t_last + problem.times[0]);
        if !(t_end > t_last) {
            return Err(Error::Config(format!("t_end = {t_end} must exceed the last design time {t_last}")));
        }
        let dt = crate::nsflow::SimConfig::aligned_dt(self.simulation.dt.unwrap_or_else(|| default_dt(dim)), problem.times[0]);
        let f = &self.farfield;
        let resolved = ResolvedConfig {
            directions: d.directions,
            delta,
            eta: self.datum.eta,
            profile,
            length,
            points,
            dt,
            t_end,
            snapshot_stride: self.simulation.snapshot_stride.unwrap_or(0),
            target_fraction: self.simulation.target_fraction.unwrap_or(crate::nsflow::DEFAULT_TARGET_FRACTION),
            tolerance: f.tolerance.unwrap_or(crate::farfield::DEFAULT_TOL),
            samples: f.samples.unwrap_or(crate::farfield::DEFAULT_SPHERE_SAMPLES),
            threshold: f.threshold.unwrap_or(crate::farfield::DEFAULT_THRESHOLD),
            offset: f.offset.unwrap_or(0.05),
            problem,
        };
        if !(resolved.tolerance > 0.0 && resolved.threshold > 0.0 && resolved.samples > 0 && resolved.offset > 0.0) {
            return Err(Error::Config("farfield tolerance, threshold, samples and offset must be positive".into()));
        }
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.problem.dimension, self.points, self.length)
    }
}
