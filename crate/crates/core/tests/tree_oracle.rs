mod common;

use common::*;
use voltra::bsvie::{default_flow_pairs, flow_residual, solve_bsvie, FnBsvie};
use voltra::oracle::tree_oracle;

fn check(b: &FnBsvie, n: usize, x0: f64, sigma: f64) {
    let (ens, reg, spec) = tree_setup(n, x0, sigma);
    let sol = solve_bsvie(b, &ens, &reg, &tight_options()).unwrap();
    assert!(sol.converged(), "n = {n}: {:?}", sol.system.trace.last());
    let tree = tree_oracle(b, &spec).unwrap();
    let gap = oracle_gap(&sol, &tree);
    assert!(gap.iter().all(|g| *g <= 1e-12), "n = {n}: {gap:?}");
    let pairs = default_flow_pairs(n);
    let ours = flow_residual(&sol, b, &ens, &pairs, true).unwrap();
    let theirs = tree.flow_residual(b, &pairs, true);
    let worst = ours.values.iter().zip(&theirs).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(worst <= 1e-12, "flow gap {worst}");
}

#[test]
fn linear_free_term_matches_oracle() {
    for n in 1..=3 {
        check(&linear_free_term(), n, 0.0, 1.0);
    }
}

#[test]
fn coupled_scalar_matches_oracle() {
    for n in 1..=3 {
        check(&coupled_scalar(), n, 0.3, 0.8);
    }
}

#[test]
fn coupled_pair_matches_oracle() {
    for n in 1..=3 {
        check(&coupled_pair(), n, -0.2, 1.1);
    }
}
