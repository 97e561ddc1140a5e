//! Subcommand execution and report emission.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use voltra::bsvie::{
    bsvie_residuals, build_system, default_flow_pairs, flow_residual, solve_bsvie, BsvieCoefficients, BsvieOptions,
    BsvieSolution, FlowReport,
};
use voltra::certify::certify_system;
use voltra::lemmas::verify_scalar_lemmas;
use voltra::oracle::{tree_oracle, TreeSolution, TreeSpec, MAX_TREE_STEPS};
use voltra::presets::ti_dp_oracle;
use voltra::system::iterate_norms;
use voltra::{
    build_grid, picard_solve, residual_check, simulate_forward, BasisSpec, CertReport, ConstantVolatility,
    PathEnsemble, ProcessField, Regressor, SystemCoefficients,
};

use crate::config::{parse_config, Command, ConfigError, EnsembleKind, RunConfig};
use crate::dump;
use crate::presets::{Built, Problem};

/// Outcome of a run that completed without an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Non-convergence or a failed check.
    Failed,
}

impl Status {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Success
        } else {
            Status::Failed
        }
    }
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Failed => 1,
        }
    }
}

#[derive(Debug, clap::Parser)]
#[command(name = "voltra", version, about = "Regression Monte Carlo solver for extended BSVIEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration (optional for verify-lemmas).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `ensemble.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn error_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some() || matches!(e.downcast_ref::<voltra::Error>(), Some(voltra::Error::Config(_)))
    });
    if config {
        2
    } else {
        1
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None if cli.command == Command::VerifyLemmas => RunConfig::default(),
        None => return Err(ConfigError::new(format!("{} needs --config <path>", cli.command.name())).into()),
    };
    if let Some(cmd) = cfg.command {
        if cmd != cli.command {
            return Err(ConfigError::new(format!(
                "configuration is for {}, invoked as {}",
                cmd.name(),
                cli.command.name()
            ))
            .into());
        }
    }
    cfg.command = Some(cli.command);
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = &cli.output {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Status> {
    let cfg = resolve(cli)?;
    if let Some(t) = cfg.threads {
        // A second initialisation in the same process keeps the first pool.
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            log::debug!("global thread pool already initialised");
        }
    }
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("cannot create {}", cfg.output.display()))?;
    match cli.command {
        Command::SolveBsvie => solve_bsvie_cmd(&cfg),
        Command::SolveSystem => solve_system_cmd(&cfg),
        Command::CheckAssumptions => check_assumptions_cmd(&cfg),
        Command::VerifyLemmas => verify_lemmas_cmd(&cfg),
        Command::FlowCheck => flow_check_cmd(&cfg),
        Command::OracleCompare => oracle_compare_cmd(&cfg),
    }
}

fn ensemble(cfg: &RunConfig) -> Result<PathEnsemble> {
    let grid = build_grid(cfg.grid.horizon, cfg.grid.n_steps)?;
    let vol = ConstantVolatility::scalar(cfg.ensemble.sigma);
    let x0 = [cfg.ensemble.x0];
    Ok(match cfg.ensemble.kind {
        EnsembleKind::MonteCarlo => simulate_forward(&vol, &x0, &grid, cfg.ensemble.n_paths, cfg.ensemble.seed)?,
        EnsembleKind::Tree => PathEnsemble::binary_tree(&vol, &x0, &grid)?,
    })
}

fn setup(cfg: &RunConfig, basis: &BasisSpec) -> Result<(PathEnsemble, Regressor)> {
    let ens = ensemble(cfg)?;
    let reg = Regressor::new(&ens, basis)?;
    if reg.ridge_used() {
        log::warn!("ill-conditioned regression: ridge fallback used");
    }
    if cfg.dump.ensemble {
        dump::ensemble(&cfg.output.join("ensemble.csv"), &ens)?;
    }
    Ok((ens, reg))
}

fn write_report(cfg: &RunConfig, status: Status, body: Value) -> Result<()> {
    let mut report = json!({
        "command": cfg.command.map(Command::name),
        "status": if status == Status::Success { "ok" } else { "failed" },
        "config": cfg,
    });
    if let (Value::Object(out), Value::Object(extra)) = (&mut report, body) {
        out.extend(extra);
    }
    let path = cfg.output.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("report: {}", path.display());
    Ok(())
}

fn bsvie_coefficients(problem: &Problem, cfg: &RunConfig) -> Result<Box<dyn BsvieCoefficients>> {
    match problem.build(cfg.grid.horizon, cfg.grid.n_steps) {
        Built::Bsvie(b) => Ok(b),
        Built::System(_) => Err(ConfigError::new(format!(
            "preset {} is a coupled system, not a BSVIE; use solve-system",
            problem.name()
        ))
        .into()),
    }
}

/// Flow statistics without the per-path values.
#[derive(Serialize)]
struct FlowSummary {
    pairs: Vec<(usize, usize)>,
    with_correction: bool,
    mean: f64,
    rms: f64,
    max: f64,
}

impl From<&FlowReport> for FlowSummary {
    fn from(r: &FlowReport) -> Self {
        Self {
            pairs: r.pairs.clone(),
            with_correction: r.with_correction,
            mean: r.mean,
            rms: r.rms,
            max: r.max,
        }
    }
}

fn flow_pairs(cfg: &RunConfig) -> Vec<(usize, usize)> {
    if cfg.flow.pairs.is_empty() {
        default_flow_pairs(cfg.grid.n_steps)
    } else {
        cfg.flow.pairs.clone()
    }
}

fn flows(
    cfg: &RunConfig,
    sol: &BsvieSolution,
    coeffs: &dyn BsvieCoefficients,
    ens: &PathEnsemble,
) -> Result<(FlowReport, FlowReport)> {
    let pairs = flow_pairs(cfg);
    let with = flow_residual(sol, coeffs, ens, &pairs, true)?;
    let without = flow_residual(sol, coeffs, ens, &pairs, false)?;
    if cfg.dump.flow {
        dump::flow(&cfg.output.join("flow.csv"), &with, &without, ens.n_paths(), coeffs.dim())?;
    }
    Ok((with, without))
}

fn print_trace(trace: &[voltra::system::TraceEntry], converged: bool) {
    for t in trace {
        println!("  iteration {:>3}: norm {:.6e}  diff {:.6e}", t.iteration, t.norms.total, t.diff.total);
    }
    println!("converged: {converged} after {} iterations", trace.len());
}

fn print_cert(r: &CertReport) {
    println!("κ = {}  mode {:?}  L★ = {:.6e}  γ = {}", r.kappa, r.mode, r.l_star, r.gamma);
    println!("  {:<22} {:>14} {:>14}  ok", "condition", "value", "threshold");
    let row = |name: &str, v: f64, t: f64, ok: bool| println!("  {name:<22} {v:>14.6e} {t:>14.6e}  {ok}");
    row("sqrt (ε₁+ε₂ side)", r.sqrt_lhs, r.sqrt_rhs, r.sqrt_condition);
    row("I₀ ≤ γR²/κ", r.i0, r.gamma * r.r_sq / r.kappa, r.i0_condition);
    row("R² < bound", r.r_sq, r.r_sq_bound, r.radius_condition);
    row("c ≥ c^ε", r.c_used, r.c_eps, r.weight_condition);
    println!("  stated radius bound {:.6e}, proof-derived {:.6e}", r.u_kappa, r.u_kappa_proof);
    for n in &r.notes {
        println!("  note: {n}");
    }
    println!("certified: {}", r.pass);
}

/// Nash actions of the game preset on every node, one column per player.
fn game_policy(problem: &Problem, cfg: &RunConfig, sol: &BsvieSolution, ens: &PathEnsemble) -> Option<ProcessField> {
    let game = problem.as_game(cfg.grid.horizon)?;
    let diag = sol.diag_z();
    let m = ens.noise_dim();
    Some(ProcessField::from_fn(ens.n_nodes(), ens.n_paths(), game.players, |i, p, o| {
        let z = diag.get(i, p);
        let v: Vec<f64> = (0..game.players).map(|k| z[k * m]).collect();
        o.copy_from_slice(&game.nash(&v));
    }))
}

fn solve_bsvie_cmd(cfg: &RunConfig) -> Result<Status> {
    let problem = cfg.problem()?;
    let coeffs = bsvie_coefficients(problem, cfg)?;
    let (ens, reg) = setup(cfg, &cfg.basis)?;
    let opts = BsvieOptions {
        picard: cfg.solver,
        cert: cfg.certification.as_ref().map(|c| c.settings(problem.constants())).transpose()?,
        grad_check: cfg.grad_check,
    };
    let sol = solve_bsvie(&*coeffs, &ens, &reg, &opts)?;
    let norms = iterate_norms(sol.iterate(), cfg.solver.c, &ens, &reg);
    let residuals = bsvie_residuals(&sol, &*coeffs, &ens, &reg);
    let (with, without) = flows(cfg, &sol, &*coeffs, &ens)?;
    if cfg.dump.trace {
        dump::trace(&cfg.output.join("trace.csv"), &sol.system.trace)?;
    }
    if cfg.dump.diagonal {
        dump::diagonal(&cfg.output.join("diagonal.csv"), sol.iterate(), &ens)?;
    }
    if cfg.dump.family {
        dump::family(&cfg.output.join("family.csv"), &sol.iterate().family, &ens)?;
    }
    if cfg.dump.policy {
        if let Some(actions) = game_policy(problem, cfg, &sol, &ens) {
            dump::policy(&cfg.output.join("policy.csv"), &actions, cfg.grid.n_steps)?;
        }
    }
    print_trace(&sol.system.trace, sol.converged());
    if let Some(c) = &sol.cert {
        print_cert(c);
    }
    println!("residual (max projected RMS): {:.6e}", residuals.max_projected_rms());
    println!("flow RMS with correction {:.6e}, without {:.6e}", with.rms, without.rms);
    println!("|Y_t^t − 𝒴_t| ≤ {:.3e}, |Z_t^t − 𝒵_t| ≤ {:.3e}", sol.diag_y_deviation, sol.diag_z_deviation);
    let status = Status::from_pass(sol.converged());
    let y0: Vec<f64> = sol.diag_y().get(0, 0).to_vec();
    write_report(
        cfg,
        status,
        json!({
            "converged": sol.converged(),
            "iterations": sol.system.trace.len(),
            "final_diff": sol.system.final_diff(),
            "norms": norms,
            "trace": sol.system.trace,
            "residuals": residuals,
            "certification": sol.cert,
            "grad_check": sol.grad_check,
            "diag_y_deviation": sol.diag_y_deviation,
            "diag_z_deviation": sol.diag_z_deviation,
            "y0": y0,
            "flow": { "with_correction": FlowSummary::from(&with), "without_correction": FlowSummary::from(&without) },
        }),
    )?;
    Ok(status)
}

fn solve_system_cmd(cfg: &RunConfig) -> Result<Status> {
    let problem = cfg.problem()?;
    let built = problem.build(cfg.grid.horizon, cfg.grid.n_steps);
    let wrapped;
    let sys: &dyn SystemCoefficients = match &built {
        Built::Bsvie(b) => {
            wrapped = build_system(&**b);
            &wrapped
        }
        Built::System(s) => &**s,
    };
    let (ens, reg) = setup(cfg, &cfg.basis)?;
    let cert = match &cfg.certification {
        Some(c) => {
            let (report, data) = certify_system(sys, &c.settings(problem.constants())?, &ens)?;
            Some((report, data))
        }
        None => None,
    };
    let sol = picard_solve(sys, &ens, &reg, &cfg.solver, None)?;
    let norms = iterate_norms(&sol.iterate, cfg.solver.c, &ens, &reg);
    let residuals = residual_check(&sol.iterate, sys, &ens, &reg, cfg.solver.scheme);
    if cfg.dump.trace {
        dump::trace(&cfg.output.join("trace.csv"), &sol.trace)?;
    }
    if cfg.dump.diagonal {
        dump::diagonal(&cfg.output.join("diagonal.csv"), &sol.iterate, &ens)?;
    }
    if cfg.dump.family {
        dump::family(&cfg.output.join("family.csv"), &sol.iterate.family, &ens)?;
    }
    if cfg.dump.policy {
        if let Some(ctrl) = problem.ti_control(cfg.grid.horizon, cfg.grid.n_steps) {
            dump::policy(&cfg.output.join("policy.csv"), &ctrl.policy_field(&sol.iterate, &ens), cfg.grid.n_steps)?;
        }
    }
    print_trace(&sol.trace, sol.converged);
    if let Some((c, _)) = &cert {
        print_cert(c);
    }
    println!("residual (max projected RMS): {:.6e}", residuals.max_projected_rms());
    let status = Status::from_pass(sol.converged);
    write_report(
        cfg,
        status,
        json!({
            "converged": sol.converged,
            "iterations": sol.trace.len(),
            "final_diff": sol.final_diff(),
            "diff_ratios": sol.diff_ratios(),
            "norms": norms,
            "trace": sol.trace,
            "residuals": residuals,
            "certification": cert.as_ref().map(|c| &c.0),
            "data_norms": cert.as_ref().map(|c| &c.1),
            "cal_y0": sol.iterate.cal_y.get(0, 0),
        }),
    )?;
    Ok(status)
}

fn check_assumptions_cmd(cfg: &RunConfig) -> Result<Status> {
    let problem = cfg.problem()?;
    let block = cfg
        .certification
        .as_ref()
        .ok_or_else(|| ConfigError::new("check-assumptions needs a [certification] section"))?;
    let settings = block.settings(problem.constants())?;
    let built = problem.build(cfg.grid.horizon, cfg.grid.n_steps);
    let ens = ensemble(cfg)?;
    let (report, data) = match &built {
        Built::Bsvie(b) => certify_system(&build_system(&**b), &settings, &ens)?,
        Built::System(s) => certify_system(&**s, &settings, &ens)?,
    };
    println!("data norms: ξ {:.6e}, η {:.6e}, ∂η {:.6e}, h₀ {:.6e}, g₀ {:.6e}, ∇g₀ {:.6e}", data.xi, data.eta, data.d_eta, data.h0, data.g0, data.dg0);
    print_cert(&report);
    let status = Status::from_pass(report.pass);
    write_report(cfg, status, json!({ "certification": report, "data_norms": data }))?;
    Ok(status)
}

fn verify_lemmas_cmd(cfg: &RunConfig) -> Result<Status> {
    let r = verify_scalar_lemmas(cfg.lemmas.resolution)?;
    let fraction = |x: f64| format!("1/{}", (1.0 / x).round());
    println!("radius lemma ({} points per axis)", r.resolution);
    println!("  stated optimum        {} = {:.6e}", fraction(r.radius.stated), r.radius.stated);
    println!("  first-order optimum   {} = {:.6e}", fraction(r.radius.proof), r.radius.proof);
    println!("  brute force (1-D)     {:.6e} at α = {:.3}", r.radius.brute_1d, r.radius.argmax_1d);
    println!("  brute force (2-D)     {:.6e} at {:?}", r.radius.brute_2d, r.radius.argmax_2d);
    println!("  discrepancy: {}", r.radius.discrepancy);
    println!("contraction lemma");
    println!("  {:>8} {:>14} {:>14} {:>10} {:>10}", "S", "closed form", "brute force", "argmin", "rel err");
    for c in &r.contraction.cases {
        println!("  {:>8.2} {:>14.6} {:>14.6} {:>10.4} {:>10.2e}", c.s, c.closed_form, c.brute_1d, c.argmin_1d, c.rel_err);
    }
    println!("  two-block search at S = 0: {:.6} (closed form 360)", r.contraction.brute_2d);
    println!("  discrepancy: {}", r.contraction.discrepancy);
    println!(
        "admissibility at κ = {}: ε₁ + ε₂ ≤ {:.6}, boundary value {:.6} = 28κ",
        r.admissibility.kappa, r.admissibility.max_eps_sum, r.admissibility.boundary_value
    );
    println!("verified: {}", r.pass);
    let status = Status::from_pass(r.pass);
    write_report(
        cfg,
        status,
        json!({
            "radius_optimum": fraction(r.radius.brute_2d),
            "contraction_optimum": r.contraction.cases[0].closed_form,
            "lemmas": r,
        }),
    )?;
    Ok(status)
}

fn flow_check_cmd(cfg: &RunConfig) -> Result<Status> {
    let problem = cfg.problem()?;
    let coeffs = bsvie_coefficients(problem, cfg)?;
    let (ens, reg) = setup(cfg, &cfg.basis)?;
    let sol = solve_bsvie(&*coeffs, &ens, &reg, &BsvieOptions { picard: cfg.solver, ..Default::default() })?;
    let (with, without) = flows(cfg, &sol, &*coeffs, &ens)?;
    let grid = ens.grid();
    let dt = (0..grid.n_steps()).map(|i| grid.dt(i)).fold(0.0, f64::max);
    let bound = cfg.flow.bound.unwrap_or(5.0 * (dt + 1.0 / (ens.n_paths() as f64).sqrt()));
    let inflation = without.rms / with.rms;
    let pass = sol.converged() && with.rms <= bound;
    println!("converged: {} after {} iterations", sol.converged(), sol.system.trace.len());
    println!("flow RMS with correction    {:.6e} (bound {:.6e})", with.rms, bound);
    println!("flow RMS without correction {:.6e} (×{:.2})", without.rms, inflation);
    println!("flow check: {}", if pass { "pass" } else { "fail" });
    let status = Status::from_pass(pass);
    write_report(
        cfg,
        status,
        json!({
            "converged": sol.converged(),
            "bound": bound,
            "inflation": inflation,
            "with_correction": FlowSummary::from(&with),
            "without_correction": FlowSummary::from(&without),
            "pass": pass,
        }),
    )?;
    Ok(status)
}

/// Largest deviations `[Y^s, ∂Y^s, Z^s, ∂Z^s, Y_t^t, Z_t^t, ∂Y_t^t]` to the tree.
fn tree_gap(sol: &BsvieSolution, tree: &TreeSolution) -> [f64; 7] {
    let n = tree.spec.n_steps;
    let mut gap = [0.0f64; 7];
    let mut upd = |k: usize, a: &[f64], b: &[f64]| {
        for (x, y) in a.iter().zip(b) {
            gap[k] = gap[k].max((x - y).abs());
        }
    };
    for p in 0..tree.n_leaves() {
        for i in 0..=n {
            let k = tree.prefix(i, p);
            for j in 0..=n {
                upd(0, sol.y(j).get(i, p), &tree.y[j][i][k]);
                upd(1, sol.dy(j).get(i, p), &tree.dy[j][i][k]);
                if i < n {
                    upd(2, sol.z(j).get(i, p), &tree.z[j][i][k]);
                    upd(3, sol.dz(j).get(i, p), &tree.dz[j][i][k]);
                }
            }
            upd(4, sol.diag_y().get(i, p), &tree.diag_y[i][k]);
            upd(5, sol.diag_z().get(i, p), &tree.diag_z[i][k]);
            upd(6, sol.diag_dy().get(i, p), &tree.diag_dy[i][k]);
        }
    }
    gap
}

fn tree_spec(cfg: &RunConfig, max_steps: usize) -> Result<TreeSpec> {
    if cfg.ensemble.kind != EnsembleKind::Tree {
        return Err(ConfigError::new("oracle-compare needs ensemble.kind = \"tree\"").into());
    }
    if cfg.grid.n_steps > max_steps {
        return Err(ConfigError::new(format!(
            "the tree reference supports at most {max_steps} steps, got {}",
            cfg.grid.n_steps
        ))
        .into());
    }
    Ok(TreeSpec {
        x0: cfg.ensemble.x0,
        sigma: cfg.ensemble.sigma,
        horizon: cfg.grid.horizon,
        n_steps: cfg.grid.n_steps,
    })
}

fn oracle_compare_cmd(cfg: &RunConfig) -> Result<Status> {
    let problem = cfg.problem()?;
    let tol = cfg.oracle.tol;
    // Conditioning on the tree filtration is exact.
    let basis = BasisSpec::filtration();
    if let Some(coeffs) = problem.fn_bsvie() {
        let spec = tree_spec(cfg, MAX_TREE_STEPS)?;
        let (ens, reg) = setup(cfg, &basis)?;
        let tree = tree_oracle(&coeffs, &spec)?;
        let sol = solve_bsvie(&coeffs, &ens, &reg, &BsvieOptions { picard: cfg.solver, ..Default::default() })?;
        let gap = tree_gap(&sol, &tree);
        let pairs = flow_pairs(cfg);
        let solver_flow = flow_residual(&sol, &coeffs, &ens, &pairs, true)?;
        let tree_flow = tree.flow_residual(&coeffs, &pairs, true);
        let flow_gap = solver_flow.values.iter().zip(&tree_flow).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let worst = gap.iter().copied().fold(flow_gap, f64::max);
        let pass = sol.converged() && worst <= tol;
        let labels = ["Y^s", "∂Y^s", "Z^s", "∂Z^s", "Y_t^t", "Z_t^t", "∂Y_t^t"];
        for (l, g) in labels.iter().zip(&gap) {
            println!("  {l:<8} {g:.3e}");
        }
        println!("  flow     {flow_gap:.3e}");
        println!("oracle gap {worst:.3e} (tolerance {tol:.1e}): {}", if pass { "pass" } else { "fail" });
        let status = Status::from_pass(pass);
        let fields: serde_json::Map<String, Value> = labels.iter().zip(gap).map(|(l, g)| (l.to_string(), json!(g))).collect();
        write_report(
            cfg,
            status,
            json!({
                "reference": "tree",
                "basis_used": basis,
                "converged": sol.converged(),
                "gaps": fields,
                "flow_gap": flow_gap,
                "max_gap": worst,
                "pass": pass,
            }),
        )?;
        return Ok(status);
    }
    if let Some(ctrl) = problem.ti_control(cfg.grid.horizon, cfg.grid.n_steps) {
        let spec = tree_spec(cfg, 2 * MAX_TREE_STEPS + 4)?;
        let (ens, reg) = setup(cfg, &basis)?;
        let dp = ti_dp_oracle(&ctrl, &spec).map_err(|e| ConfigError::new(e.to_string()))?;
        let sol = picard_solve(&ctrl, &ens, &reg, &cfg.solver, None)?;
        let pol = ctrl.policy_field(&sol.iterate, &ens);
        let n = cfg.grid.n_steps;
        let (mut mismatches, mut value_gap) = (0usize, 0.0f64);
        for p in 0..ens.n_paths() {
            for i in 0..=n {
                let k = p >> (n - i);
                if i < n && pol.get(i, p)[0] != dp.policy[i][k] {
                    mismatches += 1;
                }
                for j in 0..=n {
                    let s = ens.grid().t(j);
                    value_gap = value_gap.max((sol.iterate.family.u[j].get(i, p)[0] - dp.value(s, i, k)).abs());
                }
            }
        }
        if cfg.dump.policy {
            dump::policy(&cfg.output.join("policy.csv"), &pol, n)?;
        }
        let pass = sol.converged && mismatches == 0 && value_gap <= tol;
        println!("policy mismatches {mismatches}, value gap {value_gap:.3e}, smallest DP endpoint gap {:.3e}", dp.min_gap);
        println!("dynamic-programming comparison: {}", if pass { "pass" } else { "fail" });
        let status = Status::from_pass(pass);
        write_report(
            cfg,
            status,
            json!({
                "reference": "dynamic programming",
                "basis_used": basis,
                "converged": sol.converged,
                "policy_mismatches": mismatches,
                "value_gap": value_gap,
                "dp_min_gap": dp.min_gap,
                "pass": pass,
            }),
        )?;
        return Ok(status);
    }
    Err(ConfigError::new(format!("no reference solution for preset {}", problem.name())).into())
}

/// Path of the report a run writes.
pub fn report_path(output: &Path) -> PathBuf {
    output.join("report.json")
}
