//! End-to-end driver: assemble, precondition, iterate, report.
//!
//! [`run_case`] owns the full sequence for one configuration — mesh and form
//! assembly, glob-block extraction, coarse-space construction, the
//! interface solve, back substitution, and the discretization error against
//! the exact plane-wave solution — and returns both the solution vector and a
//! flat [`CaseRecord`] with per-stage wall-clock timings. A single-subdomain
//! grid has no interface, so `n = 1` short-circuits to one sparse direct
//! solve with a trivial iteration summary.

use std::time::Instant;

use nalgebra::DVector;

use crate::assembly::{exact_direction, l2_relative_error, BoundaryCondition};
use crate::coarse::Scaling;
use crate::error::Result;
use crate::linalg::C64;
use crate::mesh::MeshConfig;
use crate::report::CaseRecord;
use crate::schur::{glob_blocks, BlockMode, SchurSystem};
use crate::solver::{build_solver_with_blocks, Kernel, PcgStats, SolverOptions};

/// Everything needed to run one case.
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub mesh: MeshConfig,
    pub bc: BoundaryCondition,
    pub opts: SolverOptionsLite,
}

/// Copyable subset of [`SolverOptions`] (the full struct owns nothing but is
/// kept non-`Copy` to leave room for growth).
#[derive(Debug, Clone, Copy)]
pub struct SolverOptionsLite {
    pub scaling: Scaling,
    pub theta_f: f64,
    pub theta_e: f64,
    pub mode: BlockMode,
    pub levels: usize,
    pub rtol: f64,
    pub coarse_rtol: f64,
    pub maxit: usize,
    pub flexible: bool,
}

impl Default for SolverOptionsLite {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverOptionsLite {
            scaling: d.params.scaling,
            theta_f: d.params.theta_f,
            theta_e: d.params.theta_e,
            mode: d.mode,
            levels: d.levels,
            rtol: d.rtol,
            coarse_rtol: d.coarse_rtol,
            maxit: d.maxit,
            flexible: d.flexible,
        }
    }
}

impl SolverOptionsLite {
    pub fn expand(&self) -> SolverOptions {
        SolverOptions {
            params: crate::coarse::CoarseParams {
                scaling: self.scaling,
                theta_f: self.theta_f,
                theta_e: self.theta_e,
            },
            mode: self.mode,
            levels: self.levels,
            rtol: self.rtol,
            coarse_rtol: self.coarse_rtol,
            maxit: self.maxit,
            flexible: self.flexible,
            ..SolverOptions::default()
        }
    }
}

/// Solution and record of one completed case.
pub struct CaseOutcome {
    pub u: DVector<C64>,
    pub stats: PcgStats,
    pub record: CaseRecord,
}

fn bc_name(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::Dirichlet => "dirichlet",
        BoundaryCondition::Neumann => "neumann",
        BoundaryCondition::Robin => "robin",
    }
}

fn scaling_name(s: Scaling) -> &'static str {
    match s {
        Scaling::Multiplicity => "multiplicity",
        Scaling::Deluxe => "deluxe",
    }
}

fn mode_name(m: BlockMode) -> String {
    match m {
        BlockMode::Exact => "exact".into(),
        BlockMode::Economic { eta } => format!("economic(eta={eta})"),
    }
}

/// Runs one configuration end to end. Non-convergence of PCG is recorded in
/// the outcome, not raised.
pub fn run_case(cfg: &SolveConfig) -> Result<CaseOutcome> {
    let t0 = Instant::now();
    let sys = SchurSystem::build(cfg.mesh, cfg.bc)?;
    let seconds_assembly = t0.elapsed().as_secs_f64();
    let rhs = sys.rhs.clone();
    let n_dofs = sys.mesh.total_dofs();
    let n_interface = sys.n_interface();

    let base = CaseRecord {
        n: cfg.mesh.n,
        m: cfg.mesh.m,
        p: cfg.mesh.p,
        kappa: cfg.mesh.kappa,
        bc: bc_name(cfg.bc).into(),
        scaling: scaling_name(cfg.opts.scaling).into(),
        block_mode: mode_name(cfg.opts.mode),
        levels: cfg.opts.levels,
        theta_f: cfg.opts.theta_f,
        theta_e: cfg.opts.theta_e,
        rtol: cfg.opts.rtol,
        n_dofs,
        n_interface,
        pnum: 0,
        pnum_f: 0,
        pnum_e: 0,
        pnum_v: 0,
        iter: 0,
        converged: true,
        rel_residual: 0.0,
        lambda_min: 1.0,
        lambda_max: 1.0,
        cond: 1.0,
        err: 0.0,
        seconds_assembly,
        seconds_eigen: 0.0,
        seconds_coarse: 0.0,
        seconds_pcg: 0.0,
    };

    if cfg.mesh.n == 1 {
        // No interface: the interior factorization already covers the domain.
        let u = sys.expand(&rhs, &DVector::zeros(0));
        let err = l2_relative_error(&sys.mesh, &sys.dirs, &u, exact_direction());
        let stats = PcgStats {
            iterations: 0,
            converged: true,
            rel_residual: 0.0,
            lambda_min: 1.0,
            lambda_max: 1.0,
            cond: 1.0,
        };
        let record = CaseRecord { err, ..base };
        return Ok(CaseOutcome { u, stats, record });
    }

    let opts = cfg.opts.expand();
    let t1 = Instant::now();
    let blocks = glob_blocks(&sys, opts.mode, opts.full_glob_data)?;
    let seconds_eigen = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let (op, infos) = build_solver_with_blocks(sys, blocks, &opts)?;
    let seconds_coarse = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let (u, stats) = op.solve(&rhs);
    let seconds_pcg = t3.elapsed().as_secs_f64();

    let err = match &op.kernel {
        Kernel::Fine(sys) => l2_relative_error(&sys.mesh, &sys.dirs, &u, exact_direction()),
        Kernel::Coarse(_) => unreachable!("level 0 kernel is always the fine system"),
    };

    let info0 = &infos[0];
    let record = CaseRecord {
        pnum: info0.n_primal,
        pnum_f: info0.pnum_f,
        pnum_e: info0.pnum_e,
        pnum_v: info0.pnum_v,
        iter: stats.iterations,
        converged: stats.converged,
        rel_residual: stats.rel_residual,
        lambda_min: stats.lambda_min,
        lambda_max: stats.lambda_max,
        cond: stats.cond,
        err,
        seconds_eigen,
        seconds_coarse,
        seconds_pcg,
        ..base
    };
    Ok(CaseOutcome { u, stats, record })
}
