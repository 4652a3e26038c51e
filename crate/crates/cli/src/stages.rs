//! Pipeline stages shared by the individual subcommands and `pipeline`.
//! Each stage computes, records its checks on the [`Run`] and writes its
//! artifacts.

use crate::manifest::{fmt_f, lib_err, CliError, CliResult, Run};
use nsconc::correlation::{self, Correlation, Crossing, LatticeOracle};
use nsconc::design::{eval_eapp, verify_design, DesignProblem, DesignSolution, Directions, MAX_CONDITION};
use nsconc::farfield::{self, AsymptoticProfile};
use nsconc::fields::{assemble_spectral, check_divergence_free, check_symmetry, moment_matrix_zero, write_field, DatumSpec, Grid, SpectralField};
use nsconc::nsflow::{
    accumulate_k, calibrate, find_zero_k12, fnorm_diag, remainder_report, second_order_moments, simulate, CalibrationOptions,
    Calibration, InvariantSummary, MomentTrajectory, RemainderReport, SimConfig, ZeroBracket,
};
use nsconc::{Dim, Mat3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// The design artifact: the problem, how directions were chosen, and the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFile {
    pub problem: DesignProblem,
    pub directions: Directions,
    pub solution: DesignSolution,
}

impl DesignFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| CliError::usage("design", format!("{}: {e}", path.display())))?;
        toml::from_str(&s).map_err(|e| CliError::usage("design", format!("{}: {e}", path.display())))
    }
}

pub fn to_toml(stage: &str, v: &impl Serialize) -> CliResult<String> {
    toml::to_string_pretty(v).map_err(|e| CliError::run(stage, e))
}

pub fn solve_design(problem: &DesignProblem, directions: Directions) -> CliResult<DesignSolution> {
    nsconc::design::solve_design_with(problem, directions).map_err(|e| match e {
        nsconc::Error::IllConditioned { .. } => CliError::usage("design", e),
        e => lib_err("design")(e),
    })
}

/// Writes `design.toml` and `design_report.json`.
pub fn emit_design(run: &mut Run, file: &DesignFile) -> CliResult<()> {
    let report = verify_design(&file.solution, &file.problem);
    let tol = run.tol("design");
    run.check_le("design", "system residual / max(|c|, max|mu|)", report.residual / report.scale, tol);
    run.check_le("design", "condition estimate", file.solution.condition, MAX_CONDITION);
    for (i, &eapp) in report.eapp_at_times.iter().enumerate() {
        run.check_le("design", &format!("|E^app(t_{})| / max(|c|, max|mu|)", i + 1), eapp.abs() / report.scale, tol);
    }
    for (i, &ok) in report.sign_changes.iter().enumerate() {
        run.check_true("design", &format!("E^app changes sign at t_{}", i + 1), ok);
    }
    run.write_text("design.toml", &to_toml("design", file)?)?;
    run.write_json("design_report.json", &report)
}

#[derive(Serialize)]
struct DatumReport {
    dimension: Dim,
    delta: f64,
    eta: f64,
    max_admissible_delta: Option<f64>,
    grid_length: f64,
    grid_points: usize,
    divergence: f64,
    symmetry: f64,
    energy: f64,
    fnorm_diag: f64,
    moment_matrix_zero: Mat3,
}

/// Assembles the lattice datum and writes `datum.toml`, `field.nscf` and
/// `datum_report.json`.
pub fn emit_datum(run: &mut Run, spec: &DatumSpec, grid: Grid, design: Option<&DesignSolution>) -> CliResult<SpectralField> {
    let field = assemble_spectral(spec, grid).map_err(lib_err("fields"))?;
    let div = check_divergence_free(&field);
    let sym = check_symmetry(&field);
    let (tdiv, tsym) = (run.tol("divergence"), run.tol("symmetry"));
    run.check_le("fields", "divergence residual", div, tdiv);
    run.check_le("fields", "symmetry residual", sym, tsym);
    let report = DatumReport {
        dimension: spec.dim,
        delta: spec.delta,
        eta: spec.eta,
        max_admissible_delta: design.map(DesignSolution::max_delta),
        grid_length: grid.length,
        grid_points: grid.n,
        divergence: div,
        symmetry: sym,
        energy: field.energy(),
        fnorm_diag: fnorm_diag(std::slice::from_ref(&field), 0.5 * grid.length),
        moment_matrix_zero: moment_matrix_zero(spec).map_err(lib_err("fields"))?,
    };
    run.write_text("datum.toml", &to_toml("fields", &spec.to_config())?)?;
    let mut bytes = Vec::new();
    write_field(&mut bytes, &field).map_err(lib_err("fields"))?;
    run.write_bytes("field.nscf", &bytes)?;
    run.write_json("datum_report.json", &report)?;
    Ok(field)
}

/// Box length of the correlation oracle's lattice.
pub fn oracle_length(dim: Dim) -> f64 {
    match dim {
        Dim::Two => 512.0,
        Dim::Three => 128.0,
    }
}

#[derive(Serialize)]
struct CorrelationSummary {
    eta: f64,
    oracle_length: f64,
    oracle_time_steps: usize,
    max_abs_e: f64,
    max_oracle_gap: f64,
    crossings: Vec<Crossing>,
    expected: Vec<ExpectedZero>,
}

#[derive(Serialize)]
struct ExpectedZero {
    time: f64,
    window: [f64; 2],
    crossings: usize,
}

/// Writes `correlation.csv` (`t,E_closed,E_oracle,E_app`) and
/// `correlation.json`. `E_app` is empty without a design.
pub fn emit_correlation(
    run: &mut Run,
    spec: &DatumSpec,
    design: Option<(&DesignSolution, &DesignProblem)>,
    times: &[f64],
) -> CliResult<Vec<Crossing>> {
    let closed = Correlation::closed(spec, correlation::DEFAULT_POINTS).map_err(lib_err("correlation"))?;
    let length = oracle_length(spec.dim);
    let oracle = LatticeOracle::new(spec, length, correlation::DEFAULT_TIME_STEPS).map_err(lib_err("correlation"))?;
    let norm = (2.0 * PI).powi(-(spec.dim.n() as i32)) * spec.eta * spec.eta;

    let mut csv = String::from("t,E_closed,E_oracle,E_app\n");
    let (mut max_e, mut gap) = (0.0f64, 0.0f64);
    for &t in times {
        let (c, o) = (closed.value(t), oracle.value(t));
        max_e = max_e.max(c.abs());
        gap = gap.max((c - o).abs() / c.abs().max(1.0));
        let app = design.map(|(s, _)| fmt_f(norm * eval_eapp(&s.mu, s.gamma, t))).unwrap_or_default();
        csv += &format!("{},{},{},{}\n", fmt_f(t), fmt_f(c), fmt_f(o), app);
    }
    let tol = run.tol("oracle");
    run.check_le("correlation", "max |E_closed - E_oracle| / max(1, |E_closed|)", gap, tol);

    let (a, b) = (times.first().copied().unwrap_or(0.0), times.last().copied().unwrap_or(0.0));
    let scan = times.len().max(correlation::DEFAULT_SCAN_SAMPLES);
    let crossings = correlation::find_sign_changes(|t| closed.value(t), a, b, scan, 1e-10 * b.max(1e-300));
    let mut expected = Vec::new();
    if let Some((_, problem)) = design {
        for (i, &ti) in problem.times.iter().enumerate() {
            let window = [ti - problem.epsilon, ti + problem.epsilon];
            if window[1] > b {
                continue;
            }
            let n = crossings.iter().filter(|c| c.midpoint() > window[0] && c.midpoint() < window[1]).count();
            run.check_true("correlation", &format!("one sign change of E near t_{}", i + 1), n == 1);
            expected.push(ExpectedZero { time: ti, window, crossings: n });
        }
    }
    run.write_text("correlation.csv", &csv)?;
    run.write_json(
        "correlation.json",
        &CorrelationSummary {
            eta: spec.eta,
            oracle_length: length,
            oracle_time_steps: correlation::DEFAULT_TIME_STEPS,
            max_abs_e: max_e,
            max_oracle_gap: gap,
            crossings: crossings.clone(),
            expected,
        },
    )?;
    Ok(crossings)
}

/// Simulation settings of the nsflow stage.
#[derive(Debug, Clone, Serialize)]
pub struct FlowSettings {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    /// `None` calibrates.
    pub eta: Option<f64>,
    pub target_fraction: f64,
    /// Design times and the half-width of the window a zero must fall in.
    pub expected_zeros: Vec<f64>,
    pub epsilon: f64,
}

pub struct FlowOutcome {
    pub moments: MomentTrajectory,
    pub zeros: Vec<ZeroBracket>,
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    eta: f64,
    dt: f64,
    t_end: f64,
    steps: usize,
    scheme: &'a str,
    calibration: Option<&'a Calibration>,
    remainder: &'a RemainderReport,
    invariants: InvariantSummary,
    symmetry_defect: f64,
    diagonal_nondecreasing: bool,
    zeros: &'a [ZeroBracket],
    checkpoints: &'a [String],
}

/// Runs the flow (calibrating if no amplitude is given) and writes
/// `moments.csv`, checkpoints and `simulate.json`.
pub fn run_flow(run: &mut Run, spec: &DatumSpec, grid: Grid, s: &FlowSettings) -> CliResult<FlowOutcome> {
    let err = |e: nsconc::Error| CliError::run("nsflow", e);
    let sim = SimConfig {
        snapshot_stride: s.snapshot_stride,
        ..SimConfig::new(s.dt, s.t_end)
    };
    let (traj, moments, report, calibration) = match s.eta {
        Some(eta) => {
            let unit_spec = spec.with_eta(1.0);
            let traj = simulate(&spec.with_eta(eta), grid, &sim).map_err(err)?;
            let m = accumulate_k(&traj);
            let unit = assemble_spectral(&unit_spec, grid).map_err(err)?;
            let second = second_order_moments(&unit, &m.times);
            let e = Correlation::closed(&unit_spec, correlation::DEFAULT_POINTS).map_err(err)?;
            let report = remainder_report(&m, &second, &e, eta).map_err(err)?;
            (traj, m, report, None)
        }
        None => {
            let opts = CalibrationOptions {
                target_fraction: s.target_fraction,
                bound: run.tol("remainder"),
                ..Default::default()
            };
            let c = calibrate(spec, grid, &sim, &opts).map_err(err)?;
            (c.trajectory, c.moments, c.calibration.report, Some(c.calibration))
        }
    };
    let eta = report.eta;
    let inv = traj.invariants();
    let defect = moments.symmetry_defect();
    let nondecreasing = moments.diagonal_nondecreasing();
    let (tdiv, tsym, ten, tdiag, trem) =
        (run.tol("divergence"), run.tol("symmetry"), run.tol("energy"), run.tol("diagonal"), run.tol("remainder"));
    run.check_le("nsflow", "max divergence residual", inv.max_divergence, tdiv);
    run.check_le("nsflow", "max symmetry residual", inv.max_symmetry, tsym);
    run.check_le("nsflow", "max relative energy increase per step", inv.max_energy_increase, ten);
    run.check_le("nsflow", "diagonal spread of K (relative)", defect, tdiag);
    run.check_true("nsflow", "diagonal of K nondecreasing", nondecreasing);
    run.check_le("nsflow", "max|K12 + eta^2 E| / (eta^2 max|E|)", report.bound_ratio, trem);

    let mut zeros = Vec::new();
    for (i, &ti) in s.expected_zeros.iter().enumerate() {
        let (a, b) = (ti - s.epsilon, (ti + s.epsilon).min(s.t_end));
        let found = find_zero_k12(&moments, a, b);
        run.check_true("nsflow", &format!("K12 changes sign in (t_{0} - eps, t_{0} + eps)", i + 1), found.found().is_some());
        zeros.extend(found.found().copied());
    }
    if s.expected_zeros.is_empty() {
        zeros = all_zeros(&moments);
    }

    run.write_text("moments.csv", &moments_csv(&moments))?;
    let mut checkpoints = Vec::new();
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let name = format!("checkpoint_{i:05}.nscf");
        let mut bytes = Vec::new();
        write_field(&mut bytes, snap).map_err(err)?;
        run.write_bytes(&name, &bytes)?;
        checkpoints.push(name);
    }
    let summary = FlowSummary {
        eta,
        dt: traj.dt,
        t_end: s.t_end,
        steps: traj.records.len().saturating_sub(1),
        scheme: &traj.scheme,
        calibration: calibration.as_ref(),
        remainder: &report,
        invariants: inv,
        symmetry_defect: defect,
        diagonal_nondecreasing: nondecreasing,
        zeros: &zeros,
        checkpoints: &checkpoints,
    };
    run.write_json("simulate.json", &summary)?;
    Ok(FlowOutcome { moments, zeros })
}

fn entry_names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).flat_map(|i| (0..d).map(move |j| format!("{prefix}{}{}", i + 1, j + 1))).collect()
}

/// `t,K11,…,Kdd,M11,…,Mdd`.
pub fn moments_csv(m: &MomentTrajectory) -> String {
    let d = m.dim.n();
    let mut header = vec!["t".to_string()];
    header.extend(entry_names("K", d));
    header.extend(entry_names("M", d));
    let mut out = header.join(",") + "\n";
    for (i, &t) in m.times.iter().enumerate() {
        let mut row = vec![fmt_f(t)];
        for mat in [&m.k[i], &m.moments[i]] {
            row.extend((0..d).flat_map(|a| (0..d).map(move |b| fmt_f(mat[a][b]))));
        }
        out += &(row.join(",") + "\n");
    }
    out
}

/// Inverse of [`moments_csv`]; the dimension is read from the header.
pub fn parse_moments_csv(text: &str) -> CliResult<MomentTrajectory> {
    let bad = |msg: String| CliError::usage("farfield", msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("moments file is empty".into()))?.split(',').map(str::trim).collect();
    let dim = match header.len() {
        9 => Dim::Two,
        19 => Dim::Three,
        n => return Err(bad(format!("moments header has {n} columns; expected 9 (d=2) or 19 (d=3)"))),
    };
    let d = dim.n();
    let mut expected = vec!["t".to_string()];
    expected.extend(entry_names("K", d));
    expected.extend(entry_names("M", d));
    if header != expected {
        return Err(bad(format!("unexpected moments header {header:?}")));
    }
    let (mut times, mut k, mut moments) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("moments row {}: {e}", n + 1)))?;
        if vals.len() != header.len() {
            return Err(bad(format!("moments row {} has {} values", n + 1, vals.len())));
        }
        let mat = |off: usize| {
            let mut m = [[0.0; 3]; 3];
            for a in 0..d {
                for b in 0..d {
                    m[a][b] = vals[off + a * d + b];
                }
            }
            m
        };
        times.push(vals[0]);
        k.push(mat(1));
        moments.push(mat(1 + d * d));
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("moments need at least two rows with increasing times".into()));
    }
    Ok(MomentTrajectory { dim, times, k, moments, rule: "trapezoid".into() })
}

#[derive(Debug, Clone, Serialize)]
pub struct FarfieldSettings {
    pub offset: f64,
    pub samples: usize,
    pub threshold: f64,
    pub extra_times: Vec<f64>,
}

#[derive(Serialize)]
struct Classification {
    zero_time: Option<f64>,
    role: &'static str,
    profile: AsymptoticProfile,
    c_omega: Option<COmegaSummary>,
}

#[derive(Serialize)]
struct COmegaSummary {
    file: String,
    max: f64,
    threshold: f64,
    positive_fraction: f64,
}

/// Classifies the decay at each zero and at `offset` on either side, and
/// writes `classification.json` plus one `c_omega_*.csv` per generic time.
pub fn emit_farfield(run: &mut Run, m: &MomentTrajectory, zeros: &[ZeroBracket], s: &FarfieldSettings) -> CliResult<()> {
    let dim = m.dim;
    let d = dim.n() as i32;
    let tol = run.tol("classify");
    let pos = run.tol("positivity");
    let (t0, t1) = (m.times[0], *m.times.last().expect("nonempty"));
    let mut out = Vec::new();
    let cmap = |run: &mut Run, k: &Mat3, name: String| -> CliResult<Option<COmegaSummary>> {
        match farfield::c_omega_map(k, dim, s.samples, s.threshold, tol) {
            Ok(map) => {
                let mut csv = match dim {
                    Dim::Two => String::from("omega1,omega2,c1,c2\n"),
                    Dim::Three => String::from("omega1,omega2,omega3,c1,c2,c3\n"),
                };
                for (w, c) in map.directions.iter().zip(&map.magnitudes) {
                    let cols: Vec<String> = w[..dim.n()].iter().chain(&c[..dim.n()]).map(|&v| fmt_f(v)).collect();
                    csv += &(cols.join(",") + "\n");
                }
                run.write_text(&name, &csv)?;
                Ok(Some(COmegaSummary { file: name, max: map.max, threshold: map.threshold, positive_fraction: map.positive_fraction }))
            }
            Err(nsconc::Error::ProfileVanishes) => Ok(None),
            Err(e) => Err(CliError::run("farfield", e)),
        }
    };
    for (i, z) in zeros.iter().enumerate() {
        let p = AsymptoticProfile::new(z.t_star, z.k_star, dim, tol);
        run.check_true("farfield", &format!("decay -(d+2) at zero {}", i + 1), p.exponent == -(d + 2));
        out.push(Classification { zero_time: Some(z.t_star), role: "zero", profile: p, c_omega: None });
        for (role, t) in [("before", z.t_star - s.offset), ("after", z.t_star + s.offset)] {
            if t < t0 || t > t1 {
                continue;
            }
            let p = AsymptoticProfile::new(t, m.at(t), dim, tol);
            run.check_true("farfield", &format!("decay -(d+1) {role} zero {}", i + 1), p.exponent == -(d + 1));
            let c = cmap(run, &p.k, format!("c_omega_zero{}_{role}.csv", i + 1))?;
            if let Some(c) = &c {
                run.check_ge("farfield", &format!("c_omega positive fraction {role} zero {}", i + 1), c.positive_fraction, pos);
            }
            out.push(Classification { zero_time: Some(z.t_star), role, profile: p, c_omega: c });
        }
    }
    for (i, &t) in s.extra_times.iter().enumerate() {
        if t < t0 || t > t1 {
            return Err(CliError::usage("farfield", format!("time {t} lies outside the trajectory [{t0}, {t1}]")));
        }
        let p = AsymptoticProfile::new(t, m.at(t), dim, tol);
        let c = cmap(run, &p.k, format!("c_omega_time{}.csv", i + 1))?;
        out.push(Classification { zero_time: None, role: "requested", profile: p, c_omega: c });
    }
    run.write_json("classification.json", &out)
}

/// Uniform sample times on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Every sign change of `K₁₂`, in order.
pub fn all_zeros(m: &MomentTrajectory) -> Vec<ZeroBracket> {
    let t_last = *m.times.last().expect("nonempty");
    let mut out = Vec::new();
    let mut a = m.times[0];
    while let Some(z) = find_zero_k12(m, a, t_last).found().copied() {
        a = z.hi;
        out.push(z);
    }
    out
}
