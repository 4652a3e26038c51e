//! The chained pipeline. Everything that can be validated up front is, so a
//! bad configuration fails before any artifact is written.

use crate::manifest::{lib_err, CliError, CliResult, Run};
use crate::stages::{self, DesignFile, FarfieldSettings, FlowSettings};
use nsconc::config::{PipelineConfig, ResolvedConfig};
use nsconc::design::DesignSolution;
use nsconc::fields::{DatumSpec, Grid};
use nsconc::profile::BumpProfile;

/// Number of samples on the correlation curve.
pub const CORRELATION_SAMPLES: usize = 201;

pub struct Plan {
    pub config: PipelineConfig,
    pub resolved: ResolvedConfig,
    pub solution: DesignSolution,
    pub spec: DatumSpec,
    pub grid: Grid,
}

pub fn plan(config: PipelineConfig) -> CliResult<Plan> {
    let resolved = config.resolve().map_err(|e| CliError::usage("config", e))?;
    let solution = stages::solve_design(&resolved.problem, resolved.directions)?;
    let dim = resolved.problem.dimension;
    let profile = BumpProfile::named(&resolved.profile, dim).map_err(lib_err("fields"))?;
    let spec = solution
        .to_datum(resolved.delta, resolved.eta.unwrap_or(1.0), profile)
        .map_err(lib_err("fields"))?;
    let grid = resolved.grid().map_err(lib_err("fields"))?;
    grid.check_resolves(&spec).map_err(lib_err("fields"))?;
    Ok(Plan { config, resolved, solution, spec, grid })
}

pub fn execute(run: &mut Run, p: &Plan) -> CliResult<()> {
    let r = &p.resolved;
    run.tolerances.set_default("classify", r.tolerance);
    run.set_parameters(r);
    run.write_text("config.toml", &p.config.to_toml_string().map_err(|e| CliError::run("config", e))?)?;

    let file = DesignFile { problem: r.problem.clone(), directions: r.directions, solution: p.solution.clone() };
    stages::emit_design(run, &file)?;
    run.lap("design");

    stages::emit_datum(run, &p.spec, p.grid, Some(&p.solution))?;
    run.lap("fields");

    let times = stages::linspace(0.0, r.t_end, CORRELATION_SAMPLES);
    stages::emit_correlation(run, &p.spec, Some((&p.solution, &r.problem)), &times)?;
    run.lap("correlation");

    let flow = FlowSettings {
        dt: r.dt,
        t_end: r.t_end,
        snapshot_stride: r.snapshot_stride,
        eta: r.eta,
        target_fraction: r.target_fraction,
        expected_zeros: r.problem.times.clone(),
        epsilon: r.problem.epsilon,
    };
    let outcome = stages::run_flow(run, &p.spec, p.grid, &flow)?;
    run.lap("nsflow");

    let ff = FarfieldSettings { offset: r.offset, samples: r.samples, threshold: r.threshold, extra_times: vec![] };
    stages::emit_farfield(run, &outcome.moments, &outcome.zeros, &ff)?;
    run.lap("farfield");
    Ok(())
}
