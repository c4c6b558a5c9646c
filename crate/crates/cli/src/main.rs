//! Command line driver for the plane-wave least-squares BDDC solver.
//!
//! Three subcommands: `solve` runs one configuration and emits a report,
//! `sweep` repeats a solve over a list of values for one parameter, and
//! `verify` runs the structural invariant suite. Options can also be given
//! as repeated `--config key=value` pairs (e.g. from a shell-expanded file);
//! explicit flags win over `--config`, which wins over built-in defaults.
//!
//! Thresholds accept expressions in the subdomain refinement `m` (`4m`,
//! `1+log(m)`), wavenumbers accept multiples of π (`8pi`), and the economic
//! slab width accepts multiples of the mesh size (`h`, `2h`).

mod expr;

use std::collections::HashMap;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pwls_bddc::assembly::BoundaryCondition;
use pwls_bddc::coarse::{CoarseParams, Scaling};
use pwls_bddc::mesh::MeshConfig;
use pwls_bddc::pipeline::{run_case, SolveConfig, SolverOptionsLite};
use pwls_bddc::report::Report;
use pwls_bddc::schur::BlockMode;
use pwls_bddc::verify::invariant_suite;

#[derive(Parser)]
#[command(name = "pwls-bddc", version, about = "Plane-wave least-squares Helmholtz solver with adaptive BDDC preconditioning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration and report convergence, census, and error.
    Solve(RunArgs),
    /// Run a series of solves varying one parameter.
    Sweep(SweepArgs),
    /// Run the structural invariant suite at a desk-scale configuration.
    Verify(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Subdomains per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Interior refinement per subdomain (m+1 element layers per axis).
    #[arg(long)]
    m: Option<usize>,
    /// Plane-wave directions per element.
    #[arg(long)]
    p: Option<usize>,
    /// Wavenumber; accepts multiples of pi, e.g. `8pi`.
    #[arg(long)]
    kappa: Option<String>,
    /// Boundary condition: dirichlet | neumann | robin.
    #[arg(long)]
    bc: Option<String>,
    /// Interface scaling: deluxe | multiplicity.
    #[arg(long)]
    scaling: Option<String>,
    /// Face eigenvalue threshold; expression in m, e.g. `4m`.
    #[arg(long = "theta-f")]
    theta_f: Option<String>,
    /// Edge eigenvalue threshold; expression in m, e.g. `1+log(m)`.
    #[arg(long = "theta-e")]
    theta_e: Option<String>,
    /// Economic glob blocks from a local slab (default). Use --exact to disable.
    #[arg(long, conflicts_with = "exact")]
    economic: bool,
    /// Exact glob blocks from full subdomain Schur complements.
    #[arg(long)]
    exact: bool,
    /// Slab half-width for economic blocks; multiples of h, e.g. `h`, `2h`.
    #[arg(long)]
    eta: Option<String>,
    /// Number of levels (2 = two-level method with direct coarse solve).
    #[arg(long)]
    levels: Option<usize>,
    /// Relative residual tolerance of the interface PCG.
    #[arg(long)]
    rtol: Option<f64>,
    /// Relative tolerance of recursive coarse-level solves.
    #[arg(long = "coarse-rtol")]
    coarse_rtol: Option<f64>,
    /// Iteration cap; a run that hits it still completes with exit code 0.
    #[arg(long)]
    maxit: Option<usize>,
    /// Flexible (Polak-Ribiere) direction updates at the finest level.
    #[arg(long)]
    flexible: bool,
    /// Seed for the randomized probes of the verification suite.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; builds without the `parallel`
    /// feature always run sequentially).
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for compatibility; runs are bit-deterministic either way
    /// because all parallel reductions are ordered.
    #[arg(long)]
    deterministic: bool,
    /// Output format: json | csv.
    #[arg(long)]
    format: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    /// Extra `key=value` settings; explicit flags take precedence.
    #[arg(long = "config")]
    config: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: RunArgs,
    /// Parameter to vary: n | m | p | kappa | theta-f | theta-e | levels.
    #[arg(long)]
    param: String,
    /// Comma-separated values for the swept parameter.
    #[arg(long)]
    values: String,
}

/// Settled option values after merging defaults, `--config`, and flags.
struct Settings {
    mesh: MeshConfig,
    bc: BoundaryCondition,
    opts: SolverOptionsLite,
    seed: u64,
    threads: Option<usize>,
    format: String,
    out: Option<String>,
}

fn config_map(pairs: &[String]) -> Result<HashMap<String, String>, String> {
    let mut map = HashMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| format!("--config expects key=value, got `{p}`"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn pick<T: Clone>(flag: &Option<T>, cfg: Option<T>, default: T) -> T {
    flag.clone().or(cfg).unwrap_or(default)
}

impl RunArgs {
    fn settle(&self) -> Result<Settings, String> {
        let cfg = config_map(&self.config)?;
        let get = |k: &str| cfg.get(k).cloned();
        let get_num = |k: &str| -> Result<Option<usize>, String> {
            get(k).map(|v| v.parse().map_err(|_| format!("bad {k} `{v}`"))).transpose()
        };
        let get_f64 = |k: &str| -> Result<Option<f64>, String> {
            get(k).map(|v| v.parse().map_err(|_| format!("bad {k} `{v}`"))).transpose()
        };

        let n = pick(&self.n, get_num("n")?, 2);
        let m = pick(&self.m, get_num("m")?, 2);
        let p = pick(&self.p, get_num("p")?, 18);
        let kappa_s = pick(&self.kappa, get("kappa"), "8pi".into());
        let kappa = expr::parse_kappa(&kappa_s)?;
        let mesh = MeshConfig { n, m, p, kappa };
        let h = 1.0 / (n * (m + 1) - 1) as f64;

        let bc = match pick(&self.bc, get("bc"), "robin".into()).to_ascii_lowercase().as_str() {
            "dirichlet" => BoundaryCondition::Dirichlet,
            "neumann" => BoundaryCondition::Neumann,
            "robin" => BoundaryCondition::Robin,
            other => return Err(format!("unknown boundary condition `{other}`")),
        };
        let scaling = match pick(&self.scaling, get("scaling"), "deluxe".into())
            .to_ascii_lowercase()
            .as_str()
        {
            "deluxe" => Scaling::Deluxe,
            "multiplicity" => Scaling::Multiplicity,
            other => return Err(format!("unknown scaling `{other}`")),
        };

        let theta_f = expr::eval_theta(&pick(&self.theta_f, get("theta-f"), "4m".into()), m)?;
        let theta_e = expr::eval_theta(&pick(&self.theta_e, get("theta-e"), "1000".into()), m)?;

        let exact = self.exact || get("mode").as_deref() == Some("exact");
        let mode = if exact {
            BlockMode::Exact
        } else {
            let eta = expr::parse_eta(&pick(&self.eta, get("eta"), "h".into()), h)?;
            BlockMode::Economic { eta }
        };

        let opts = SolverOptionsLite {
            scaling,
            theta_f,
            theta_e,
            mode,
            levels: pick(&self.levels, get_num("levels")?, 2),
            rtol: pick(&self.rtol, get_f64("rtol")?, 1e-5),
            coarse_rtol: pick(&self.coarse_rtol, get_f64("coarse-rtol")?, 1e-2),
            maxit: pick(&self.maxit, get_num("maxit")?, 100),
            flexible: self.flexible || get("flexible").as_deref() == Some("true"),
        };

        Ok(Settings {
            mesh,
            bc,
            opts,
            seed: pick(&self.seed, get("seed").and_then(|v| v.parse().ok()), 0),
            threads: self.threads.or(get_num("threads")?),
            format: pick(&self.format, get("format"), "json".into()).to_ascii_lowercase(),
            out: self.out.clone().or(get("out")),
        })
    }
}

fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn emit(report: &Report, format: &str, out: Option<&str>) -> Result<(), String> {
    let body = match format {
        "json" => report.to_json(),
        "csv" => report.to_csv(),
        other => return Err(format!("unknown format `{other}` (expected json or csv)")),
    };
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("writing {path}: {e}")),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn solve_once(s: &Settings) -> Result<pwls_bddc::report::CaseRecord, String> {
    let cfg = SolveConfig { mesh: s.mesh, bc: s.bc, opts: s.opts };
    let out = run_case(&cfg).map_err(|e| e.to_string())?;
    if !out.stats.converged {
        eprintln!(
            "warning: PCG stopped at {} iterations with relative residual {:.3e}",
            out.stats.iterations, out.stats.rel_residual
        );
    }
    Ok(out.record)
}

fn cmd_solve(args: &RunArgs) -> Result<(), String> {
    let s = args.settle()?;
    init_threads(s.threads);
    let record = solve_once(&s)?;
    emit(&Report::new(vec![record]), &s.format, s.out.as_deref())
}

fn apply_sweep_value(args: &mut RunArgs, param: &str, value: &str) -> Result<(), String> {
    let as_usize = || value.parse::<usize>().map_err(|_| format!("bad value `{value}` for {param}"));
    match param {
        "n" => args.n = Some(as_usize()?),
        "m" => args.m = Some(as_usize()?),
        "p" => args.p = Some(as_usize()?),
        "levels" => args.levels = Some(as_usize()?),
        "kappa" => args.kappa = Some(value.to_string()),
        "theta-f" => args.theta_f = Some(value.to_string()),
        "theta-e" => args.theta_e = Some(value.to_string()),
        other => return Err(format!("cannot sweep over `{other}`")),
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), String> {
    let base = args.base.settle()?;
    init_threads(base.threads);
    let mut records = Vec::new();
    for value in args.values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut run = args.base.clone();
        apply_sweep_value(&mut run, &args.param, value)?;
        let s = run.settle()?;
        eprintln!("sweep: {} = {value}", args.param);
        records.push(solve_once(&s)?);
    }
    if records.is_empty() {
        return Err("no sweep values given".into());
    }
    emit(&Report::new(records), &base.format, base.out.as_deref())
}

fn cmd_verify(args: &RunArgs) -> Result<bool, String> {
    let s = args.settle()?;
    init_threads(s.threads);
    let params = CoarseParams {
        scaling: s.opts.scaling,
        theta_f: s.opts.theta_f,
        theta_e: s.opts.theta_e,
    };
    let checks = invariant_suite(s.mesh, s.bc, params, s.opts.mode, s.seed)
        .map_err(|e| e.to_string())?;
    let mut all_pass = true;
    for c in &checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:<28} residual {:>11.3e}  tol {:>9.1e}", c.name, c.residual, c.tol);
        all_pass &= c.pass;
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(a).map(|()| true),
        Cmd::Sweep(a) => cmd_sweep(a).map(|()| true),
        Cmd::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
