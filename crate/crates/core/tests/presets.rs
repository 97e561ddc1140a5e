mod common;

use common::*;
use voltra::oracle::TreeSpec;
use voltra::presets::{ti_dp_oracle, Discount, Reward, TiControl};
use voltra::{picard_solve, PicardOptions};

fn exp_control(n: usize) -> TiControl {
    TiControl {
        a1: -1.0,
        a2: 1.0,
        discount: Discount::Exponential { rho: 0.3 },
        reward: Reward { l0: 0.2, l1: -1.2, q: 0.0, theta: 0.0 },
        f1: 1.0,
        g1: 0.0,
        g2: 0.0,
        time_cap: 0.0,
        horizon: 0.0,
    }
    .for_grid(1.0, n)
}

#[test]
fn exponential_discount_matches_dp() {
    for n in 1..=3 {
        let (ens, reg, spec) = tree_setup(n, 0.1, 0.9);
        let ctrl = exp_control(n);
        ctrl.validate().unwrap();
        let opts = PicardOptions { tol: 1e-14, max_iter: 400, ..Default::default() };
        let sol = picard_solve(&ctrl, &ens, &reg, &opts, None).unwrap();
        assert!(sol.converged);
        let dp = ti_dp_oracle(&ctrl, &TreeSpec { ..spec }).unwrap();
        let pol = ctrl.policy_field(&sol.iterate, &ens);
        let mut worst = 0.0f64;
        for p in 0..ens.n_paths() {
            for i in 0..=n {
                let k = p >> (n - i);
                if i < n {
                    assert_eq!(pol.get(i, p)[0], dp.policy[i][k], "node {i} path {p}");
                }
                for j in 0..=n {
                    let s = ens.grid().t(j);
                    worst = worst.max((sol.iterate.family.u[j].get(i, p)[0] - dp.value(s, i, k)).abs());
                }
            }
        }
        assert!(worst <= 1e-10, "n={n}: {worst}");
    }
}

#[test]
fn dp_policy_switches_on_deepest_tree() {
    let (_, _, spec) = tree_setup(3, 0.1, 0.9);
    let dp = ti_dp_oracle(&exp_control(3), &spec).unwrap();
    let all: Vec<f64> = dp.policy.iter().flatten().copied().collect();
    assert!(all.contains(&-1.0) && all.contains(&1.0), "{all:?}");
}

#[test]
fn symmetric_game_has_identical_players() {
    use voltra::bsvie::solve_bsvie;
    use voltra::presets::Game;
    for n in 1..=3 {
        let (ens, reg, _) = tree_setup(n, 0.2, 1.0);
        let game = Game {
            players: 2,
            c: 2.0,
            theta: 0.4,
            q: 0.2,
            discount: Discount::Hyperbolic { beta: 0.6 },
            a1: -0.5,
            a2: 0.5,
            weights: vec![1.0, 1.0],
            horizon: 1.0,
        };
        game.validate().unwrap();
        let sol = solve_bsvie(&game, &ens, &reg, &tight_options()).unwrap();
        assert!(sol.converged());
        let it = sol.iterate();
        let mut worst = 0.0f64;
        for j in 0..=n {
            for i in 0..=n {
                for p in 0..ens.n_paths() {
                    let y = it.family.u[j].get(i, p);
                    worst = worst.max((y[0] - y[1]).abs());
                }
            }
        }
        assert!(worst <= 1e-10, "{worst}");
        assert!(it.family.u[0].max_abs() > 1e-3);
    }
}

#[test]
fn linear_g_without_discount_is_a_plain_bsde() {
    use voltra::{backward_sweep, Scheme};
    let (ens, reg, _) = tree_setup(3, 0.0, 1.0);
    let ctrl = TiControl {
        a1: -1.0,
        a2: 1.0,
        discount: Discount::None,
        reward: Reward { l0: 0.1, l1: 0.3, q: 0.5, theta: 0.2 },
        f1: 0.7,
        g1: 0.4,
        g2: 0.0,
        time_cap: 0.0,
        horizon: 0.0,
    }
    .for_grid(1.0, 3);
    ctrl.validate().unwrap();
    let opts = PicardOptions { tol: 1e-12, max_iter: 400, ..Default::default() };
    let sol = picard_solve(&ctrl, &ens, &reg, &opts, None).unwrap();
    assert!(sol.converged);
    let terminal: Vec<f64> = (0..ens.n_paths()).map(|p| 1.1 * ens.path(p).terminal()[0]).collect();
    let driver = |pt: &voltra::Point<'_>, _y: &[f64], z: &[f64], out: &mut [f64]| {
        out[0] = ctrl.hamiltonian_max(pt.t, pt.x[0], z[0]).unwrap().1;
    };
    let plain = backward_sweep(&terminal, 1, &driver, &ens, &reg, Scheme::Explicit).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=3 {
        for p in 0..ens.n_paths() {
            worst = worst.max((sol.iterate.cal_y.get(i, p)[0] - plain.y.get(i, p)[0]).abs());
        }
    }
    assert!(worst <= 3e-12, "{worst}");
}
