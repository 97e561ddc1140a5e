use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn voltra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltra")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn run_in(dir: &TempDir, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), "run.toml", config);
    let out = dir.path().join(format!("out-{}", extra.join("-")));
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (voltra(&args), out)
}

const CERTIFIED: &str = r#"
[problem]
preset = "small-quadratic"
l = 0.1
amplitude = 2e-3

[grid]
horizon = 1.0
n_steps = 4

[ensemble]
n_paths = 500
seed = 3

[solver]
tol = 1e-12
c = 0.2

[certification]
kappa = 10.0
eps = [150.0, 150.0, 1.0, 1.0, 1.0, 1.0]
mode = "quadratic"
"#;

#[test]
fn check_assumptions_passes_with_four_flags() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "check-assumptions", CERTIFIED, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let c = &r["certification"];
    for flag in ["sqrt_condition", "i0_condition", "radius_condition", "weight_condition", "pass"] {
        assert_eq!(c[flag], Value::Bool(true), "{flag}");
    }
    assert_eq!(r["status"], "ok");
    assert_eq!(r["config"]["certification"]["kappa"], 10.0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("certified: true"), "{stdout}");
}

#[test]
fn failing_certification_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = CERTIFIED.replace("kappa = 10.0\neps = [150.0, 150.0", "kappa = 10.0\nr_sq = 0.1\neps = [150.0, 150.0");
    let (o, out) = run_in(&dir, "check-assumptions", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&out)["certification"]["radius_condition"], Value::Bool(false));
}

#[test]
fn non_convergence_exits_one_with_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = CERTIFIED.replace("tol = 1e-12", "tol = 1e-12\nmax_iter = 1");
    let (o, out) = run_in(&dir, "solve-system", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["converged"], Value::Bool(false));
    assert_eq!(r["trace"].as_array().unwrap().len(), 1);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(trace.starts_with("iteration,norm_cal_y,"));
}

#[test]
fn solve_system_converges() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "solve-system", CERTIFIED, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["converged"], Value::Bool(true));
    assert!(r["residuals"]["cal_y"]["projected_rms"].as_f64().unwrap() < 1e-10);
}

#[test]
fn verify_lemmas_reports_both_optima() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("lemmas");
    let o = voltra(&["verify-lemmas", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(text.contains("1/840") && text.contains("360"), "{text}");
    let r: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(r["radius_optimum"], "1/840");
    assert!((r["contraction_optimum"].as_f64().unwrap() - 360.0).abs() < 1e-9);
    assert!(r["lemmas"]["radius"]["discrepancy"].as_str().unwrap().contains("1/80"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("1/840") && stdout.contains("360"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_in(&dir, "solve-bsvie", "[problem]\npreset = \"linear-free-term\"\n[solvr]\ntol = 1.0\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solvr"));
    // A system preset is not a BSVIE.
    let (o, _) = run_in(&dir, "solve-bsvie", CERTIFIED, &[]);
    assert_eq!(o.status.code(), Some(2));
    // The file names a different subcommand.
    let (o, _) = run_in(&dir, "solve-system", &format!("command = \"flow-check\"\n{CERTIFIED}"), &[]);
    assert_eq!(o.status.code(), Some(2));
    // Missing constants for a preset without known ones.
    let cfg = "[problem]\npreset = \"coupled-scalar\"\n[certification]\nkappa = 10.0\neps = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]\nmode = \"quadratic\"\n";
    let (o, _) = run_in(&dir, "check-assumptions", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(voltra(&["solve-bsvie"]).status.code(), Some(2));
    assert_eq!(voltra(&["solve-bsvie", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(voltra(&["no-such-command"]).status.code(), Some(2));
}

const BSVIE: &str = r#"
[problem]
preset = "coupled-scalar"

[grid]
horizon = 1.0
n_steps = 4

[ensemble]
n_paths = 2000
seed = 21
x0 = 0.3
sigma = 0.8

[solver]
tol = 1e-9
max_iter = 100

[dump]
ensemble = true
family = true
"#;

#[test]
fn csv_outputs_are_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let (a, out_a) = run_in(&dir, "solve-bsvie", BSVIE, &["--threads", "1"]);
    let (b, out_b) = run_in(&dir, "solve-bsvie", BSVIE, &["--threads", "4"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    for name in ["ensemble.csv", "family.csv", "diagonal.csv", "trace.csv", "flow.csv"] {
        let x = std::fs::read(out_a.join(name)).unwrap();
        let y = std::fs::read(out_b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert!(x == y, "{name} differs");
    }
    // A different seed changes the ensemble.
    let (_, out_c) = run_in(&dir, "solve-bsvie", BSVIE, &["--seed", "22"]);
    assert_ne!(std::fs::read(out_a.join("ensemble.csv")).unwrap(), std::fs::read(out_c.join("ensemble.csv")).unwrap());
    assert_eq!(report(&out_c)["config"]["ensemble"]["seed"], 22);
}

#[test]
fn csv_columns_follow_the_documented_order() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "solve-bsvie", BSVIE, &[]);
    assert_eq!(o.status.code(), Some(0));
    let header = |name: &str| std::fs::read_to_string(out.join(name)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("ensemble.csv"), "path,node,time,x0");
    assert_eq!(header("family.csv"), "s_node,t_node,path,y0,z0_0,dy0,dz0_0");
    assert_eq!(header("diagonal.csv"), "node,time,path,cal_y0,cal_z0_0,diag_u0,diag_v0_0,diag_du0");
    assert_eq!(header("flow.csv"), "a,b,path,with0,without0");
    let rows = std::fs::read_to_string(out.join("family.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 5 * 5 * 2000);
    let r = report(&out);
    assert_eq!(r["config"]["basis"]["kind"], "polynomial");
    assert_eq!(r["config"]["basis"]["degree"], 3);
}

#[test]
fn oracle_compare_matches_the_tree() {
    let dir = TempDir::new().unwrap();
    let cfg = "[problem]\npreset = \"coupled-pair\"\n[grid]\nhorizon = 1.0\nn_steps = 3\n[ensemble]\nkind = \"tree\"\nx0 = -0.2\nsigma = 1.1\n[solver]\ntol = 1e-14\nmax_iter = 400\n";
    let (o, out) = run_in(&dir, "oracle-compare", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(report(&out)["max_gap"].as_f64().unwrap() <= 1e-12);
    // Monte Carlo ensembles have no exact reference.
    let (o, _) = run_in(&dir, "oracle-compare", &cfg.replace("kind = \"tree\"\n", ""), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn control_preset_matches_dynamic_programming_and_dumps_its_policy() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[problem]
preset = "ti-control"
a1 = -1.0
a2 = 1.0
discount = { kind = "exponential", rho = 0.3 }
reward = { l0 = 0.2, l1 = -1.2 }
f1 = 1.0
[grid]
horizon = 1.0
n_steps = 3
[ensemble]
kind = "tree"
x0 = 0.1
sigma = 0.9
[solver]
tol = 1e-14
max_iter = 400
"#;
    let (o, out) = run_in(&dir, "oracle-compare", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    assert_eq!(r["policy_mismatches"], 0);
    let policy = std::fs::read_to_string(out.join("policy.csv")).unwrap();
    assert!(policy.starts_with("node,path,a\n"));
    assert_eq!(policy.lines().count(), 1 + 3 * 8);
    for line in policy.lines().skip(1) {
        let a: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(a == -1.0 || a == 1.0, "affine reward gives bang-bang actions: {line}");
    }
    // Hyperbolic discounting has no dynamic-programming reference.
    let (o, _) = run_in(&dir, "oracle-compare", &cfg.replace("kind = \"exponential\", rho = 0.3", "kind = \"hyperbolic\", beta = 0.3"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flow_check_separates_the_negative_control() {
    let dir = TempDir::new().unwrap();
    let cfg = "[problem]\npreset = \"linear-free-term\"\n[grid]\nhorizon = 1.0\nn_steps = 8\n[ensemble]\nn_paths = 4000\nseed = 7\nx0 = 1.0\n[solver]\ntol = 1e-10\n[flow]\npairs = [[0, 8], [4, 8]]\n";
    let (o, out) = run_in(&dir, "flow-check", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    assert_eq!(r["pass"], Value::Bool(true));
    assert!(r["inflation"].as_f64().unwrap() > 3.0);
    let (o, _) = run_in(&dir, "flow-check", &cfg.replace("[flow]\n", "[flow]\nbound = 1e-9\n"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn game_policy_has_one_column_per_player() {
    let dir = TempDir::new().unwrap();
    let cfg = "[problem]\npreset = \"game\"\nplayers = 2\nc = 2.0\ntheta = 0.4\nq = 0.2\ndiscount = { kind = \"hyperbolic\", beta = 0.6 }\na1 = -0.5\na2 = 0.5\n[grid]\nhorizon = 1.0\nn_steps = 3\n[ensemble]\nkind = \"tree\"\nx0 = 0.2\n[solver]\ntol = 1e-12\nmax_iter = 200\n";
    let (o, out) = run_in(&dir, "solve-bsvie", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let policy = std::fs::read_to_string(out.join("policy.csv")).unwrap();
    assert!(policy.starts_with("node,path,a0,a1\n"));
    for line in policy.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], cols[3], "symmetric players act alike: {line}");
    }
}
