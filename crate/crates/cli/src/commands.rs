//! Subcommand handlers: argument validation, then the shared stages.

use crate::manifest::{fmt_f, lib_err, CliError, CliResult, Run, Tolerances};
use crate::pipeline;
use crate::stages::{self, DesignFile, FarfieldSettings, FlowSettings};
use crate::{BuildDatumArgs, Cli, Command, CorrelateArgs, DesignArgs, FarfieldArgs, GridArgs, KatoArgs, ReproduceArgs, SimulateArgs};
use nsconc::config::{self, DesignSection, PipelineConfig};
use nsconc::design::{DesignSolution, Directions};
use nsconc::farfield::log_radii;
use nsconc::fields::{DatumConfig, DatumSpec, Grid};
use nsconc::geometry;
use nsconc::nsflow::SimConfig;
use nsconc::oscillatory::{self, KatoDatum, KatoKind};
use nsconc::{Dim, Vec3};
use serde::Serialize;
use std::path::Path;

pub fn dispatch(cli: &Cli, config: Option<PipelineConfig>, tol: Tolerances) -> CliResult<bool> {
    let out = &cli.out_dir;
    let cfg = config.as_ref();
    match &cli.command {
        Command::Design(a) => design(out, cfg, a, tol),
        Command::BuildDatum(a) => build_datum(out, cfg, a, tol),
        Command::Correlate(a) => correlate(out, a, tol),
        Command::Simulate(a) => simulate(out, cfg, a, tol),
        Command::Farfield(a) => farfield(out, a, tol),
        Command::Kato(a) => kato(out, a, tol),
        Command::ReproduceExample(a) => reproduce(out, a, tol),
        Command::Pipeline => {
            let cfg = config.ok_or_else(|| CliError::usage("arguments", "pipeline requires --config <file>"))?;
            run_pipeline(out, "pipeline", cfg, tol)
        }
    }
}

/// Runs `body`; validation errors before any output propagate (exit 2),
/// later failures are recorded in the manifest.
fn execute(mut run: Run, body: impl FnOnce(&mut Run) -> CliResult<()>) -> CliResult<bool> {
    match body(&mut run) {
        Ok(()) => run.finish(),
        Err(e) if e.usage && !run.has_outputs() => Err(e),
        Err(e) => {
            eprintln!("error: {e}");
            run.fail(&e);
            run.finish().map(|_| false)
        }
    }
}

pub fn parse_list(what: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::usage("arguments", format!("{what}: '{t}' is not a number"))))
        .collect()
}

fn parse_dim(d: u8) -> CliResult<Dim> {
    Dim::try_from(d).map_err(|e| CliError::usage("arguments", e))
}

fn read_text(stage: &str, path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(stage, format!("{}: {e}", path.display())))
}

fn load_datum(path: &Path) -> CliResult<DatumConfig> {
    toml::from_str(&read_text("fields", path)?).map_err(|e| CliError::usage("fields", format!("{}: {e}", path.display())))
}

fn grid_from(args: &GridArgs, cfg: Option<&PipelineConfig>, dim: Dim) -> CliResult<Grid> {
    let (l0, n0) = config::default_grid(dim);
    let c = cfg.filter(|c| c.design.dimension == dim).map(|c| &c.grid);
    let length = args.length.or(c.and_then(|g| g.length)).unwrap_or(l0);
    let points = args.points.or(c.and_then(|g| g.points)).unwrap_or(n0);
    Grid::new(dim, points, length).map_err(lib_err("fields"))
}

fn design_config(cfg: Option<&PipelineConfig>, a: &DesignArgs) -> CliResult<PipelineConfig> {
    let mut c = cfg.cloned().unwrap_or_else(|| PipelineConfig {
        design: DesignSection {
            dimension: Dim::Two,
            times: Vec::new(),
            epsilon: None,
            gamma: 4.0,
            c: None,
            directions: Directions::Rule,
        },
        datum: Default::default(),
        grid: Default::default(),
        simulation: Default::default(),
        farfield: Default::default(),
    });
    let d = &mut c.design;
    if let Some(t) = &a.times {
        d.times = parse_list("--times", t)?;
    }
    if let Some(p) = &a.times_file {
        d.times = parse_list("--times-file", &read_text("design", p)?)?;
    }
    if let Some(dim) = a.dimension {
        d.dimension = parse_dim(dim)?;
    }
    d.epsilon = a.epsilon.or(d.epsilon);
    d.gamma = a.gamma.unwrap_or(d.gamma);
    d.c = a.c.or(d.c);
    if let Some(s) = &a.directions {
        d.directions = s.parse().map_err(|e| CliError::usage("arguments", e))?;
    }
    Ok(c)
}

fn design_file(cfg: &PipelineConfig) -> CliResult<DesignFile> {
    let r = cfg.resolve().map_err(lib_err("design"))?;
    let solution = stages::solve_design(&r.problem, r.directions)?;
    Ok(DesignFile { problem: r.problem, directions: r.directions, solution })
}

fn design(out: &Path, cfg: Option<&PipelineConfig>, a: &DesignArgs, tol: Tolerances) -> CliResult<bool> {
    let c = design_config(cfg, a)?;
    let file = design_file(&c)?;
    let mut run = Run::new(out, "design", tol)?;
    run.set_parameters(&file.problem);
    execute(run, |run| {
        stages::emit_design(run, &file)?;
        run.lap("design");
        Ok(())
    })
}

#[derive(Serialize)]
struct DatumParams<'a> {
    datum: &'a DatumConfig,
    grid_length: f64,
    grid_points: usize,
}

fn build_datum(out: &Path, cfg: Option<&PipelineConfig>, a: &BuildDatumArgs, tol: Tolerances) -> CliResult<bool> {
    let (mut dc, design) = if let Some(p) = &a.datum {
        (load_datum(p)?, None)
    } else {
        let file = match (&a.design, cfg) {
            (Some(p), _) => DesignFile::load(p)?,
            (None, Some(c)) => design_file(c)?,
            (None, None) => return Err(CliError::usage("arguments", "build-datum needs --design, --datum or --config")),
        };
        let dim = file.problem.dimension;
        let cd = cfg.map(|c| c.datum.clone()).unwrap_or_default();
        let delta = cd.delta.unwrap_or_else(|| config::default_delta(dim));
        let profile = cd.profile.unwrap_or_else(|| "standard".into());
        let eta = cd.eta.unwrap_or(1.0);
        let spec = datum_from_design(&file.solution, delta, eta, &profile)?;
        (spec.to_config(), Some(file.solution))
    };
    dc.delta = a.delta.unwrap_or(dc.delta);
    dc.eta = a.eta.unwrap_or(dc.eta);
    if let Some(p) = &a.profile {
        dc.profile = p.clone();
    }
    let spec = DatumSpec::from_config(&dc).map_err(lib_err("fields"))?;
    let grid = grid_from(&a.grid, cfg, spec.dim)?;
    grid.check_resolves(&spec).map_err(lib_err("fields"))?;
    let mut run = Run::new(out, "build-datum", tol)?;
    run.set_parameters(DatumParams { datum: &dc, grid_length: grid.length, grid_points: grid.n });
    execute(run, |run| {
        stages::emit_datum(run, &spec, grid, design.as_ref())?;
        run.lap("fields");
        Ok(())
    })
}

fn datum_from_design(s: &DesignSolution, delta: f64, eta: f64, profile: &str) -> CliResult<DatumSpec> {
    let p = nsconc::profile::BumpProfile::named(profile, s.dimension).map_err(lib_err("fields"))?;
    s.to_datum(delta, eta, p).map_err(lib_err("fields"))
}

#[derive(Serialize)]
struct CorrelateParams<'a> {
    datum: &'a DatumConfig,
    t_start: f64,
    t_end: f64,
    samples: usize,
}

fn correlate(out: &Path, a: &CorrelateArgs, tol: Tolerances) -> CliResult<bool> {
    let dc = load_datum(&a.datum)?;
    let spec = DatumSpec::from_config(&dc).map_err(lib_err("fields"))?;
    let design = a.design.as_deref().map(DesignFile::load).transpose()?;
    let t_end = a.t_end.unwrap_or_else(|| match &design {
        Some(f) => f.problem.times.last().unwrap() + f.problem.times[0],
        None => 1.0,
    });
    if !(a.t_start >= 0.0 && t_end > a.t_start && t_end.is_finite()) {
        return Err(CliError::usage("arguments", format!("need 0 <= t_start < t_end, got [{}, {t_end}]", a.t_start)));
    }
    if a.samples < 2 {
        return Err(CliError::usage("arguments", "--samples must be at least 2"));
    }
    if let Some(f) = &design {
        if f.problem.dimension != spec.dim {
            return Err(CliError::usage("arguments", "design and datum dimensions differ"));
        }
    }
    let mut run = Run::new(out, "correlate", tol)?;
    run.set_parameters(CorrelateParams { datum: &dc, t_start: a.t_start, t_end, samples: a.samples });
    let times = stages::linspace(a.t_start, t_end, a.samples);
    execute(run, |run| {
        stages::emit_correlation(run, &spec, design.as_ref().map(|f| (&f.solution, &f.problem)), &times)?;
        run.lap("correlation");
        Ok(())
    })
}

#[derive(Serialize)]
struct SimulateParams<'a> {
    datum: &'a DatumConfig,
    grid_length: f64,
    grid_points: usize,
    settings: &'a FlowSettings,
}

fn simulate(out: &Path, cfg: Option<&PipelineConfig>, a: &SimulateArgs, tol: Tolerances) -> CliResult<bool> {
    let dc = load_datum(&a.datum)?;
    let spec = DatumSpec::from_config(&dc).map_err(lib_err("fields"))?;
    let dim = spec.dim;
    let design = a.design.as_deref().map(DesignFile::load).transpose()?;
    let grid = grid_from(&a.grid, cfg, dim)?;
    grid.check_resolves(&spec).map_err(lib_err("fields"))?;
    let sim_cfg = cfg.map(|c| c.simulation.clone()).unwrap_or_default();
    let t_end = match (a.t_end.or(sim_cfg.t_end), &design) {
        (Some(t), _) => t,
        (None, Some(f)) => f.problem.times.last().unwrap() + f.problem.times[0],
        (None, None) => return Err(CliError::usage("arguments", "--t-end is required without --design")),
    };
    let mut dt = a.dt.or(sim_cfg.dt).unwrap_or_else(|| config::default_dt(dim));
    if !(dt > 0.0 && t_end > 0.0 && t_end.is_finite()) {
        return Err(CliError::usage("arguments", format!("need dt > 0 and t_end > 0, got dt = {dt}, t_end = {t_end}")));
    }
    let (expected_zeros, epsilon) = match &design {
        Some(f) => {
            if f.problem.dimension != dim {
                return Err(CliError::usage("arguments", "design and datum dimensions differ"));
            }
            dt = SimConfig::aligned_dt(dt, f.problem.times[0]);
            let zs = f.problem.times.iter().copied().filter(|&t| t < t_end).collect();
            (zs, f.problem.epsilon)
        }
        None => (Vec::new(), 0.0),
    };
    let eta = if a.calibrate { None } else { Some(a.eta.unwrap_or(spec.eta)) };
    let target_fraction = a.target_fraction.or(sim_cfg.target_fraction).unwrap_or(nsconc::nsflow::DEFAULT_TARGET_FRACTION);
    if !(target_fraction > 0.0) {
        return Err(CliError::usage("arguments", "--target-fraction must be positive"));
    }
    let settings = FlowSettings { dt, t_end, snapshot_stride: a.snapshot_stride, eta, target_fraction, expected_zeros, epsilon };
    let mut run = Run::new(out, "simulate", tol)?;
    run.set_parameters(SimulateParams { datum: &dc, grid_length: grid.length, grid_points: grid.n, settings: &settings });
    execute(run, |run| {
        stages::run_flow(run, &spec, grid, &settings)?;
        run.lap("nsflow");
        Ok(())
    })
}

#[derive(Serialize)]
struct FarfieldParams<'a> {
    moments: String,
    settings: &'a FarfieldSettings,
}

fn farfield(out: &Path, a: &FarfieldArgs, tol: Tolerances) -> CliResult<bool> {
    let m = stages::parse_moments_csv(&read_text("farfield", &a.moments)?)?;
    let extra_times = a.times.as_deref().map(|s| parse_list("--times", s)).transpose()?.unwrap_or_default();
    if !(a.offset > 0.0 && a.threshold > 0.0 && a.samples > 0) {
        return Err(CliError::usage("arguments", "--offset, --threshold and --samples must be positive"));
    }
    let (t0, t1) = (m.times[0], *m.times.last().unwrap());
    if let Some(t) = extra_times.iter().find(|&&t| t < t0 || t > t1) {
        return Err(CliError::usage("arguments", format!("time {t} lies outside the trajectory [{t0}, {t1}]")));
    }
    let settings = FarfieldSettings { offset: a.offset, samples: a.samples, threshold: a.threshold, extra_times };
    let zeros = stages::all_zeros(&m);
    let mut run = Run::new(out, "farfield", tol)?;
    run.set_parameters(FarfieldParams { moments: a.moments.display().to_string(), settings: &settings });
    execute(run, |run| {
        stages::emit_farfield(run, &m, &zeros, &settings)?;
        run.lap("farfield");
        Ok(())
    })
}

#[derive(Serialize)]
struct KatoParams {
    kind: KatoKind,
    eta: f64,
    t: f64,
    ray: Vec3,
    radii: Vec<f64>,
    q: f64,
    norm_radii: Vec<f64>,
}

#[derive(Serialize)]
struct KatoVerdict {
    /// `None` when every sample is below the rounding floor.
    slope: Option<f64>,
    slope_note: Option<String>,
    excluded_radii: Vec<f64>,
    difference_slope: Option<f64>,
    log_corrected_slope: Option<f64>,
    partial_norms: oscillatory::PartialNorms,
    last_increment_ratio: f64,
}

/// Slope bounds of the linear Kato contrast.
const PLAIN_SLOPE: (f64, f64) = (-1.3, -0.8);
const MODULATED_SLOPE_MAX: f64 = -3.0;
const DIFFERENCE_SLOPE_MAX: f64 = -1.8;
const SATURATED: f64 = 0.01;
const NOT_SATURATED: f64 = 0.1;

fn kato(out: &Path, a: &KatoArgs, tol: Tolerances) -> CliResult<bool> {
    let kind: KatoKind = a.kind.parse().map_err(|e| CliError::usage("arguments", e))?;
    let ray = parse_list("--ray", &a.ray)?;
    if ray.len() != 3 || !(geometry::norm([ray[0], ray[1], ray[2]]) > 0.0) {
        return Err(CliError::usage("arguments", "--ray needs three components, not all zero"));
    }
    let n = geometry::norm([ray[0], ray[1], ray[2]]);
    let omega = [ray[0] / n, ray[1] / n, ray[2] / n];
    if !(a.t > 0.0 && a.r_min > 0.0 && a.r_max > a.r_min && a.count >= 2 && a.eta.is_finite() && a.eta != 0.0) {
        return Err(CliError::usage("arguments", "need t > 0, 0 < r_min < r_max, count >= 2 and a nonzero eta"));
    }
    if a.r_max > 2000.0 {
        return Err(CliError::usage("arguments", "radii are limited to 2000"));
    }
    let q = a.q.unwrap_or(match kind {
        KatoKind::Plain => 1.0,
        KatoKind::Modulated => 2.0,
    });
    if !(1.0..3.0).contains(&q) {
        return Err(CliError::usage("arguments", format!("q must lie in [1, 3), got {q}")));
    }
    let datum = KatoDatum::new(kind, a.eta);
    let radii = log_radii(a.r_min, a.r_max, a.count);
    let norm_radii = log_radii(a.r_max.min(10.0).max(1.0), a.r_max, 7);
    let mut run = Run::new(out, "kato", tol)?;
    run.set_parameters(KatoParams { kind, eta: a.eta, t: a.t, ray: omega, radii: radii.clone(), q, norm_radii: norm_radii.clone() });
    execute(run, |run| {
        let err = |e: nsconc::Error| CliError::run("kato", e);
        let slope_of = |r: nsconc::Result<nsconc::farfield::DecayFit>| match r {
            Ok(f) => Ok(Some(f)),
            Err(nsconc::Error::Domain(_)) => Ok(None),
            Err(e) => Err(err(e)),
        };
        let samples = oscillatory::ray_samples(&datum, a.t, omega, &radii).map_err(err)?;
        let fit = slope_of(oscillatory::measure_heat_decay(&datum, a.t, omega, &radii))?;
        let (difference, corrected) = match kind {
            KatoKind::Plain => (
                slope_of(oscillatory::measure_difference_decay(&datum, a.t, omega, &radii))?,
                slope_of(oscillatory::measure_log_corrected_decay(&datum, a.t, omega, &radii))?,
            ),
            KatoKind::Modulated => (None, None),
        };
        let norms = oscillatory::lq_trend(&datum, a.t, q, &norm_radii).map_err(err)?;
        let ratio = norms.last_increment_ratio();
        let slope = fit.as_ref().map(|f| f.slope);
        match kind {
            KatoKind::Plain => {
                let s = slope.unwrap_or(f64::NAN);
                run.check_ge("kato", "heat-flow slope lower bound", s, PLAIN_SLOPE.0);
                run.check_le("kato", "heat-flow slope upper bound", s, PLAIN_SLOPE.1);
                let ds = difference.as_ref().map_or(f64::NAN, |f| f.slope);
                run.check_le("kato", "difference slope", ds, DIFFERENCE_SLOPE_MAX);
                run.check_ge("kato", "partial norms keep growing (last increment ratio)", ratio, NOT_SATURATED);
            }
            KatoKind::Modulated => {
                match slope {
                    Some(s) => run.check_le("kato", "heat-flow slope", s, MODULATED_SLOPE_MAX),
                    None => run.check_true("kato", "heat flow below the rounding floor at every radius", true),
                };
                run.check_le("kato", "partial norms saturate (last increment ratio)", ratio, SATURATED);
            }
        }
        let slope_text = slope.map_or_else(|| "-inf".to_string(), fmt_f);
        let mut csv = String::from("r,abs_heat,floor,fitted_slope\n");
        for (r, v) in radii.iter().zip(&samples) {
            csv += &format!("{},{},{},{}\n", fmt_f(*r), fmt_f(v.magnitude()), fmt_f(v.floor), slope_text);
        }
        run.write_text("kato.csv", &csv)?;
        let verdict = KatoVerdict {
            slope,
            slope_note: slope.is_none().then(|| "every sample is below the rounding floor: faster than any resolvable power".into()),
            excluded_radii: fit.map(|f| f.excluded).unwrap_or_else(|| radii.clone()),
            difference_slope: difference.map(|f| f.slope),
            log_corrected_slope: corrected.map(|f| f.slope),
            partial_norms: norms,
            last_increment_ratio: ratio,
        };
        run.write_json("kato.json", &verdict)?;
        run.lap("kato");
        Ok(())
    })
}

fn reproduce(out: &Path, a: &ReproduceArgs, tol: Tolerances) -> CliResult<bool> {
    let dim = match a.which.as_str() {
        "2d" => Dim::Two,
        "3d" => Dim::Three,
        w => return Err(CliError::usage("arguments", format!("--which must be 2d or 3d, got '{w}'"))),
    };
    let mut c = PipelineConfig::example(dim);
    c.datum.eta = a.eta;
    c.datum.delta = a.delta;
    c.grid.length = a.grid.length;
    c.grid.points = a.grid.points;
    c.simulation.dt = a.dt;
    c.simulation.t_end = a.t_end;
    run_pipeline(out, "reproduce-example", c, tol)
}

fn run_pipeline(out: &Path, name: &str, cfg: PipelineConfig, tol: Tolerances) -> CliResult<bool> {
    let plan = pipeline::plan(cfg)?;
    let run = Run::new(out, name, tol)?;
    execute(run, |run| pipeline::execute(run, &plan))
}
