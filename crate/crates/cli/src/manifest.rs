//! Run manifests, artifact output and tolerance overrides.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
/// Bumped whenever a default value changes.
pub const DEFAULTS_VERSION: u32 = 1;

/// A failure with the pipeline stage it happened in.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
    /// Usage and validation errors exit with 2, failed runs with 1.
    pub usage: bool,
}

impl CliError {
    pub fn usage(stage: &str, message: impl std::fmt::Display) -> Self {
        Self { stage: stage.into(), message: message.to_string(), usage: true }
    }

    pub fn run(stage: &str, message: impl std::fmt::Display) -> Self {
        Self { stage: stage.into(), message: message.to_string(), usage: false }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Maps library errors: validation-type errors are usage errors.
pub fn lib_err(stage: &str) -> impl Fn(nsconc::Error) -> CliError + '_ {
    move |e| {
        use nsconc::Error::*;
        let usage = matches!(
            e,
            InvalidProfile(_) | InvalidDatum(_) | UnderResolved { .. } | InvalidDesign(_) | GridMismatch(_) | Domain(_) | Config(_) | Format(_)
        );
        CliError { stage: stage.into(), message: e.to_string(), usage }
    }
}

/// Named numerical tolerances, overridable with `--tolerance key=value`.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    #[serde(flatten)]
    pub values: BTreeMap<String, f64>,
    #[serde(skip)]
    overridden: Vec<String>,
}

impl Default for Tolerances {
    fn default() -> Self {
        let entries = [
            ("classify", nsconc::farfield::DEFAULT_TOL),
            ("design", 1e-10),
            ("divergence", 1e-10),
            ("symmetry", 1e-10),
            ("energy", 1e-8),
            ("diagonal", 1e-8),
            ("remainder", nsconc::nsflow::REMAINDER_BOUND),
            ("oracle", 1e-6),
            ("positivity", 0.95),
        ];
        Self {
            values: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            overridden: Vec::new(),
        }
    }
}

impl Tolerances {
    pub fn with_overrides(overrides: &[String]) -> CliResult<Self> {
        let mut t = Self::default();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::usage("arguments", format!("tolerance override '{o}' is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::usage("arguments", format!("tolerance '{k}' has a non-numeric value '{v}'")))?;
            match t.values.get_mut(k.trim()) {
                Some(slot) if v > 0.0 => {
                    *slot = v;
                    t.overridden.push(k.trim().to_string());
                }
                Some(_) => return Err(CliError::usage("arguments", format!("tolerance '{k}' must be positive"))),
                None => {
                    let known: Vec<&str> = t.values.keys().map(String::as_str).collect();
                    return Err(CliError::usage(
                        "arguments",
                        format!("unknown tolerance '{k}' (known: {})", known.join(", ")),
                    ));
                }
            }
        }
        Ok(t)
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    /// Replaces a default unless the user overrode it on the command line.
    pub fn set_default(&mut self, key: &str, v: f64) {
        if !self.overridden.iter().any(|k| k == key) {
            self.values.insert(key.to_string(), v);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub defaults_version: u32,
    pub parameters: serde_json::Value,
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
    /// The stage error that stopped the run, if any.
    pub error: Option<String>,
    pub passed: bool,
}

/// Collects artifacts, checks and timings for one run directory.
pub struct Run {
    dir: PathBuf,
    subcommand: String,
    pub tolerances: Tolerances,
    parameters: serde_json::Value,
    checks: Vec<Check>,
    outputs: Vec<String>,
    error: Option<String>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Run {
    /// Refuses directories that already hold a run: manifests are never rewritten.
    pub fn new(dir: &Path, subcommand: &str, tolerances: Tolerances) -> CliResult<Self> {
        if dir.join(MANIFEST).exists() {
            return Err(CliError::usage(
                "output",
                format!("{} already contains a run manifest; choose a fresh --out-dir", dir.display()),
            ));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand: subcommand.into(),
            tolerances,
            parameters: serde_json::Value::Null,
            checks: Vec::new(),
            outputs: Vec::new(),
            error: None,
            timings: BTreeMap::new(),
            clock: Instant::now(),
        })
    }

    pub fn set_parameters(&mut self, p: impl Serialize) {
        self.parameters = serde_json::to_value(p).expect("parameters serialize");
    }

    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances.get(key)
    }

    /// Records `value ≤ limit`.
    pub fn check_le(&mut self, stage: &str, name: &str, value: f64, limit: f64) -> bool {
        let passed = value <= limit;
        self.checks.push(Check { stage: stage.into(), name: name.into(), value, limit, passed });
        passed
    }

    /// Records `value ≥ limit`.
    pub fn check_ge(&mut self, stage: &str, name: &str, value: f64, limit: f64) -> bool {
        let passed = value >= limit;
        self.checks.push(Check { stage: stage.into(), name: name.into(), value, limit, passed });
        passed
    }

    /// Records a boolean condition (value 1 for true).
    pub fn check_true(&mut self, stage: &str, name: &str, ok: bool) -> bool {
        self.checks.push(Check {
            stage: stage.into(),
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            passed: ok,
        });
        ok
    }

    /// Records a run failure so the manifest still documents the attempt.
    pub fn fail(&mut self, err: &CliError) {
        self.check_true(&err.stage.clone(), "stage completed", false);
        self.error = Some(err.to_string());
    }

    pub fn has_outputs(&self) -> bool {
        !self.outputs.is_empty()
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.insert(stage.into(), (now - self.clock).as_secs_f64());
        self.clock = now;
    }

    fn path(&mut self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::run("output", format!("{}: {e}", self.dir.display())))?;
        self.outputs.push(name.into());
        Ok(self.dir.join(name))
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> CliResult<()> {
        let p = self.path(name)?;
        fs::write(&p, content).map_err(|e| CliError::run("output", format!("{}: {e}", p.display())))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::run("output", e))?;
        s.push('\n');
        self.write_text(name, &s)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.path(name)?;
        fs::write(&p, bytes).map_err(|e| CliError::run("output", format!("{}: {e}", p.display())))
    }

    /// Writes the timings and the manifest; returns whether every check passed.
    pub fn finish(mut self) -> CliResult<bool> {
        let timings = std::mem::take(&mut self.timings);
        self.write_json(TIMINGS, &timings)?;
        let passed = self.error.is_none() && self.checks.iter().all(|c| c.passed);
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            defaults_version: DEFAULTS_VERSION,
            parameters: std::mem::take(&mut self.parameters),
            tolerances: self.tolerances.clone(),
            checks: std::mem::take(&mut self.checks),
            outputs: std::mem::take(&mut self.outputs),
            error: self.error.take(),
            passed,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::run("output", e))?;
        s.push('\n');
        fs::create_dir_all(&self.dir).map_err(|e| CliError::run("output", e))?;
        fs::write(self.dir.join(MANIFEST), s).map_err(|e| CliError::run("output", e))?;
        for c in manifest.checks.iter().filter(|c| !c.passed) {
            eprintln!("check failed [{}] {}: {:e} (limit {:e})", c.stage, c.name, c.value, c.limit);
        }
        Ok(passed)
    }
}

/// Full-precision, locale-free float formatting for CSV.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.17e}")
}
