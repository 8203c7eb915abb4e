//! End-to-end pipelines behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::config::ScenarioConfig;
use crate::control::{build_gramian, exact_null_control_semilinear, verify_null_inequality};
use crate::error::{Error, Result};
use crate::evolution::{build_propagator, PropagatorTable};
use crate::grid::GridFunction;
use crate::io::{fmt_num, write_csv, Summary};
use crate::mild::{contraction_report, picard_solve, variation_of_constants};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// Homogeneous trajectory `Ψ(t, t₀) x₀`; optionally dumps the whole table.
    Evolve { dump_table: bool },
    /// Mild solution with zero control.
    Solve,
    /// Closed-loop null control of the semilinear system.
    Control,
    /// Empirical constant of the null-controllability inequality.
    Verify,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Evolve { .. } => "evolve",
            Pipeline::Solve => "solve",
            Pipeline::Control => "control",
            Pipeline::Verify => "verify",
        }
    }
}

/// Where the run writes and which seed it uses.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
}

/// Runs `pipeline` on `config`, writing its files into `opts.out_dir`.
///
/// A summary is written on failure too, with `status=failed` and the error code,
/// before the error is returned.
pub fn run_scenario(config: &ScenarioConfig, pipeline: Pipeline, opts: &RunOptions) -> Result<Summary> {
    fs::create_dir_all(&opts.out_dir)?;
    let mut summary = Summary::new();
    summary.set("command", pipeline.name());
    summary.set("schema_version", config.schema_version.to_string());
    summary.set("seed", opts.seed.to_string());
    summary.set_num("alpha", config.alpha);
    summary.set("n_nodes", config.n_nodes.to_string());
    summary.set("dim", config.dim().to_string());
    let summary_path = opts.out_dir.join(&config.output.summary);
    match run_inner(config, pipeline, opts, &mut summary) {
        Ok(()) => {
            summary.set("status", "ok");
            summary.write(&summary_path)?;
            Ok(summary)
        }
        Err(e) => {
            summary.set("status", "failed");
            summary.set("error_code", e.code());
            summary.set("error", e.to_string());
            summary.write(&summary_path)?;
            Err(e)
        }
    }
}

fn run_inner(config: &ScenarioConfig, pipeline: Pipeline, opts: &RunOptions, summary: &mut Summary) -> Result<()> {
    let family = config.family()?;
    let grid = config.grid()?;
    let propagator = build_propagator(&family, &grid, config.propagator_options())?;
    summary.set("backend", if propagator.is_spectral() { "spectral" } else { "dense" });
    summary.set_num("m_est", propagator.m_est());
    if let Some(kernel) = propagator.kernel() {
        summary.set_num("kernel_residual", kernel.residual());
    }
    let trajectory_path = opts.out_dir.join(&config.output.trajectory);
    let control_path = opts.out_dir.join(&config.output.control);

    match pipeline {
        Pipeline::Evolve { dump_table } => {
            let x0 = config.x0(opts.seed);
            let zeros = vec![DVector::zeros(family.dim()); grid.n_nodes()];
            let traj = GridFunction::new(grid.clone(), variation_of_constants(&propagator, &x0, &zeros))?;
            summary.set_num("composition_defect", propagator.composition_defect());
            summary.set_num("final_state_norm", traj.last().norm());
            write_csv(&trajectory_path, &traj, "x")?;
            if dump_table {
                fs::write(opts.out_dir.join("psi_table.csv"), table_csv(&propagator))?;
            }
        }
        Pipeline::Solve => {
            let problem = config.problem(opts.seed)?;
            let out = picard_solve(&problem, &propagator)?;
            summary.set("iterations", out.iterations.to_string());
            summary.set_num("residual", out.residual);
            summary.set_num("final_state_norm", out.trajectory.last().norm());
            write_csv(&trajectory_path, &out.trajectory, "x")?;
        }
        Pipeline::Control => {
            let problem = config.problem(opts.seed)?;
            let gramian = build_gramian(&family, &problem.b, &propagator)?;
            summary.set_num("gramian_jitter", gramian.jitter());
            let report = contraction_report(&problem, &propagator, &gramian)?;
            summary.set_num("h_norm", report.h_norm);
            summary.set_num("b_norm", report.b_norm);
            summary.set_num("n_const", report.n_const);
            summary.set_num("gamma_growth", report.gamma_growth);
            summary.set_num("contraction_lhs", report.lhs);
            summary.set("contraction_satisfied", report.satisfied.to_string());
            let result = exact_null_control_semilinear(&problem, &gramian, &propagator)?;
            summary.set_num("final_state_norm", result.final_state_norm);
            summary.set_num("control_energy", result.control_energy);
            summary.set("iterations", result.iterations.to_string());
            write_csv(&trajectory_path, &result.closed_loop_trajectory, "x")?;
            write_csv(&control_path, &result.control, "u")?;
        }
        Pipeline::Verify => {
            let b = config.b_matrix();
            let gramian = build_gramian(&family, &b, &propagator)?;
            let horizon = config.tf - config.t0;
            let (gamma_emp, passes) =
                verify_null_inequality(&gramian, &propagator, horizon, config.verify.trials, opts.seed)?;
            let gamma_ineq = horizon / (horizon + 1.0);
            summary.set("trials", config.verify.trials.to_string());
            summary.set_num("gamma_emp", gamma_emp);
            summary.set_num("gamma_ineq", gamma_ineq);
            summary.set("passes", passes.to_string());
            if !passes {
                return Err(Error::Verification(format!(
                    "gamma_emp {} is below T/(T+1) = {}",
                    fmt_num(gamma_emp),
                    fmt_num(gamma_ineq)
                )));
            }
        }
    }
    Ok(())
}

/// Rows `i, j, τ_i, τ_j, Ψ(t_i, t_j)` (row-major entries) for every `i >= j`.
fn table_csv(table: &PropagatorTable) -> String {
    let grid = table.grid();
    let d = table.dim();
    let mut out = String::from("i,j,tau_i,tau_j");
    for r in 1..=d {
        for c in 1..=d {
            out.push_str(&format!(",psi_{r}_{c}"));
        }
    }
    out.push('\n');
    for i in 0..grid.n_nodes() {
        for j in 0..=i {
            let m = table.matrix(i, j);
            out.push_str(&format!("{i},{j},{},{}", fmt_num(grid.tau(i)), fmt_num(grid.tau(j))));
            for r in 0..d {
                for c in 0..d {
                    out.push(',');
                    out.push_str(&fmt_num(m[(r, c)]));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Output directory: the flag wins over the config, then the current directory.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ScenarioConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
