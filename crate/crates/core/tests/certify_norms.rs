use proptest::prelude::*;
use voltra::certify::{
    assemble_i0, c_eps_simplified, compute_c_eps, compute_radius_bound, estimate_data_norms, estimate_i0,
    expand_simplified, max_eps_sum, DataNorms,
};
use voltra::norms::{diagonal_energy_check, family_norms, weighted_norms};
use voltra::presets::SmallQuadratic;
use voltra::{
    build_grid, certify, certify_system, simulate_forward, BasisSpec, CertInput, CertSettings, ConstantVolatility,
    GrowthConstants, Mode, PathEnsemble, PathRef, Point, ProcessField, RadiusPolicy, Regressor, SystemCoefficients,
};

/// Driverless system with `ξ = K` and `η(s) = a·s·tanh(X_T)`.
struct Terminal {
    k: f64,
    a: f64,
}

impl SystemCoefficients for Terminal {
    fn d1(&self) -> usize {
        1
    }
    fn d2(&self) -> usize {
        1
    }
    fn xi(&self, _path: PathRef<'_>, out: &mut [f64]) {
        out[0] = self.k;
    }
    fn eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        out[0] = self.a * s * path.terminal()[0].tanh();
    }
    fn d_eta(&self, _s: f64, path: PathRef<'_>, out: &mut [f64]) {
        out[0] = self.a * path.terminal()[0].tanh();
    }
    fn h(&self, _pt: &Point<'_>, _y: &[f64], _z: &[f64], _u: &[f64], _v: &[f64], _du: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn g(&self, _s: f64, _pt: &Point<'_>, _u: &[f64], _v: &[f64], _y: &[f64], _z: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn grad_g(
        &self,
        _s: f64,
        _pt: &Point<'_>,
        _du: &[f64],
        _dv: &[f64],
        _u: &[f64],
        _v: &[f64],
        _y: &[f64],
        _z: &[f64],
        out: &mut [f64],
    ) {
        out[0] = 0.0;
    }
}

fn tree(n_steps: usize, x0: f64, sigma: f64) -> PathEnsemble {
    let grid = build_grid(1.0, n_steps).unwrap();
    PathEnsemble::binary_tree(&ConstantVolatility::scalar(sigma), &[x0], &grid).unwrap()
}

fn input(kappa: f64, eps: Vec<f64>, r_sq: f64, c: f64, mode: Mode, l: f64) -> CertInput {
    CertInput {
        kappa,
        eps,
        gamma: None,
        r_sq,
        c,
        mode,
        constants: GrowthConstants::uniform(l),
        horizon: 1.0,
        radius_policy: RadiusPolicy::Conservative,
    }
}

#[test]
fn zero_data_has_zero_i0() {
    let ens = tree(3, 0.2, 1.0);
    let (i0, norms) = estimate_i0(&Terminal { k: 0.0, a: 0.0 }, &[1.0; 6], 0.7, &ens).unwrap();
    assert_eq!(i0, 0.0);
    assert_eq!(norms, DataNorms::default());
}

#[test]
fn constant_terminal_gives_k_squared() {
    let ens = tree(3, 0.2, 1.0);
    for k in [0.5, -2.0, 3.0] {
        let (i0, _) = estimate_i0(&Terminal { k, a: 0.0 }, &[1.0; 6], 0.0, &ens).unwrap();
        assert!((i0 - k * k).abs() <= 1e-15 * k * k, "{i0}");
        // The weight e^{cT/2} multiplies the terminal norm.
        let (i0, _) = estimate_i0(&Terminal { k, a: 0.0 }, &[1.0; 6], 0.4, &ens).unwrap();
        assert!((i0 - 0.4f64.exp() * k * k).abs() <= 1e-13, "{i0}");
    }
}

#[test]
fn tree_i0_matches_exhaustive_enumeration() {
    let (n, x0, sigma, a) = (4usize, 0.1, 0.8, 1.5);
    let c = 0.3;
    let eps = [2.0, 3.0, 1.0, 1.0, 1.0, 0.5];
    let ens = tree(n, x0, sigma);
    let (i0, norms) = estimate_i0(&Terminal { k: 0.0, a }, &eps, c, &ens).unwrap();
    // X_T = x0 + σ√Δ(2k − N) with k up-moves; |tanh| peaks at an extreme.
    let h = (1.0 / n as f64).sqrt();
    let peak = (0..=n)
        .map(|k| (x0 + sigma * h * (2.0 * k as f64 - n as f64)).tanh().abs())
        .fold(0.0, f64::max);
    let w = (0.5 * c).exp();
    let d_eta = w * a * peak;
    // sup over s ∈ [0, 1] of |s| is attained at s = T = 1.
    let eta = d_eta;
    let expect = 2.0 * eta * eta + (1.0 + eps[0] + eps[1]) * d_eta * d_eta;
    assert!((norms.eta - eta).abs() <= 1e-14);
    assert!((norms.d_eta - d_eta).abs() <= 1e-14);
    assert!((i0 - expect).abs() <= 1e-13 * expect, "{i0} vs {expect}");
}

#[test]
fn small_quadratic_data_norms_scale_with_the_amplitude() {
    let grid = build_grid(1.0, 6).unwrap();
    let ens = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &grid, 2_000, 3).unwrap();
    let one = estimate_data_norms(&SmallQuadratic { l: 0.1, amplitude: 1e-2 }, 0.2, &ens);
    let two = estimate_data_norms(&SmallQuadratic { l: 0.1, amplitude: 2e-2 }, 0.2, &ens);
    for (a, b) in [(one.xi, two.xi), (one.eta, two.eta), (one.h0, two.h0)] {
        assert!(a > 0.0 && (b - 2.0 * a).abs() <= 1e-14 * b);
    }
    // The drivers vanish at zero, and ∂_s η ≡ 0.
    assert_eq!((one.d_eta, one.g0, one.dg0), (0.0, 0.0, 0.0));
}

#[test]
fn certify_examples() {
    let eps = vec![1.0; 11];
    // κ = 10, L★ = 1: stated bound 1/1680, conservative 1/16800.
    let ok = certify(&input(10.0, eps.clone(), 1e-5, 1e3, Mode::LipschitzQuadratic, 1.0), 1e-7).unwrap();
    assert!(ok.pass, "{ok:?}");
    assert_eq!(ok.u_kappa, 1.0 / 1680.0);
    assert!(!ok.notes.is_empty());
    let big_r = certify(&input(10.0, eps.clone(), 1e-4, 1e3, Mode::LipschitzQuadratic, 1.0), 1e-7).unwrap();
    assert!(!big_r.radius_condition && !big_r.pass);
    let mut stated = input(10.0, eps.clone(), 1e-4, 1e3, Mode::LipschitzQuadratic, 1.0);
    stated.radius_policy = RadiusPolicy::Statement;
    assert!(certify(&stated, 1e-7).unwrap().pass);
    let low_c = certify(&input(10.0, eps.clone(), 1e-5, 1.0, Mode::LipschitzQuadratic, 1.0), 1e-7).unwrap();
    assert!(!low_c.weight_condition && !low_c.pass);
    let big_i0 = certify(&input(10.0, eps.clone(), 1e-5, 1e3, Mode::LipschitzQuadratic, 1.0), 1e-6).unwrap();
    assert!(!big_i0.i0_condition && !big_i0.pass);
    // At κ = 10 the left side starts at 120 ≤ 280, leaving ε₁ + ε₂ ≤ (√280 − √30)² − 30 ≈ 96.7.
    let mut e = eps.clone();
    e[0] = 45.0;
    e[1] = 45.0;
    assert!(certify(&input(10.0, e.clone(), 1e-5, 1e3, Mode::LipschitzQuadratic, 1.0), 1e-7).unwrap().sqrt_condition);
    e[0] = 50.0;
    e[1] = 50.0;
    assert!(!certify(&input(10.0, e, 1e-5, 1e3, Mode::LipschitzQuadratic, 1.0), 1e-7).unwrap().sqrt_condition);
    assert!(certify(&input(10.0, vec![0.0; 11], 1e-5, 10.0, Mode::LipschitzQuadratic, 1.0), 0.0).is_err());
    assert!(certify(&input(10.0, vec![1.0; 5], 1e-5, 10.0, Mode::LipschitzQuadratic, 1.0), 0.0).is_err());
}

#[test]
fn certify_system_defaults_to_the_threshold_weight() {
    let grid = build_grid(1.0, 4).unwrap();
    let ens = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &grid, 1_000, 5).unwrap();
    let sys = SmallQuadratic { l: 0.1, amplitude: 2e-3 };
    let settings = CertSettings {
        kappa: 10.0,
        eps: vec![150.0, 150.0, 1.0, 1.0, 1.0, 1.0],
        gamma: None,
        r_sq: None,
        c: None,
        mode: Mode::Quadratic,
        constants: sys.constants(),
        radius_policy: RadiusPolicy::Conservative,
    };
    let (report, _) = certify_system(&sys, &settings, &ens).unwrap();
    assert_eq!(report.c_used, report.c_eps);
    assert!(report.weight_condition && report.i0_condition);
    assert!((report.r_sq - 10.0 * report.i0 / 0.25).abs() <= 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pass_is_the_conjunction_of_the_flags(
        kappa in 7.0f64..40.0,
        e1 in 1e-3f64..400.0,
        e2 in 1e-3f64..400.0,
        r_sq in 1e-8f64..1e-2,
        c in 0.0f64..50.0,
        l in 0.01f64..2.0,
        i0 in 0.0f64..1e-3,
        quad in any::<bool>(),
    ) {
        let mode = if quad { Mode::Quadratic } else { Mode::LipschitzQuadratic };
        let mut eps = vec![1.0; mode.eps_len()];
        eps[0] = e1;
        eps[1] = e2;
        let r = certify(&input(kappa, eps, r_sq, c, mode, l), i0).unwrap();
        prop_assert_eq!(r.pass, r.sqrt_condition && r.i0_condition && r.radius_condition && r.weight_condition);
        prop_assert_eq!(r.sqrt_condition, e1 + e2 <= max_eps_sum(kappa, mode));
        prop_assert!(r.r_sq_bound <= r.u_kappa);
    }

    #[test]
    fn radius_bound_decreases_in_kappa_and_l_star(
        kappa in 1.0f64..100.0,
        dk in 1e-3f64..10.0,
        l in 0.01f64..5.0,
        dl in 1e-3f64..1.0,
        t in 0.1f64..5.0,
        quad in any::<bool>(),
    ) {
        let mode = if quad { Mode::Quadratic } else { Mode::LipschitzQuadratic };
        let base = compute_radius_bound(kappa, l, t, mode).unwrap();
        prop_assert!(compute_radius_bound(kappa + dk, l, t, mode).unwrap() < base);
        prop_assert!(compute_radius_bound(kappa, l + dl, t, mode).unwrap() < base);
    }

    #[test]
    fn quadratic_weight_is_nonincreasing_in_eps(
        e1 in 0.01f64..500.0,
        e2 in 0.01f64..500.0,
        d in 0.0f64..100.0,
        l in 0.0f64..3.0,
        t in 0.1f64..5.0,
    ) {
        let k = GrowthConstants::uniform(l);
        let base = compute_c_eps(&[e1, e2], &k, t, Mode::Quadratic).unwrap();
        prop_assert!(compute_c_eps(&[e1 + d, e2], &k, t, Mode::Quadratic).unwrap() <= base);
        prop_assert!(compute_c_eps(&[e1, e2 + d], &k, t, Mode::Quadratic).unwrap() <= base);
        prop_assert!(base >= 2.0 * l);
    }

    #[test]
    fn simplified_weight_matches_the_expansion(
        et in prop::array::uniform5(0.01f64..50.0),
        ly in 0.0f64..2.0,
        lu in 0.0f64..2.0,
        ldu in 0.0f64..2.0,
        t in 0.1f64..4.0,
    ) {
        let k = GrowthConstants { l_y: ly, l_u: lu, l_du: ldu, ..Default::default() };
        let full = compute_c_eps(&expand_simplified(et), &k, t, Mode::LipschitzQuadratic).unwrap();
        let simple = c_eps_simplified(et, &k, t);
        prop_assert!((full - simple).abs() <= 1e-12 * full.abs().max(1.0), "{} vs {}", full, simple);
    }

    #[test]
    fn i0_is_monotone_in_every_data_norm(
        base in prop::array::uniform6(0.0f64..2.0),
        bump in 0.0f64..1.0,
        which in 0usize..6,
        eps in prop::array::uniform6(0.01f64..10.0),
    ) {
        let make = |v: [f64; 6]| DataNorms { xi: v[0], eta: v[1], d_eta: v[2], h0: v[3], g0: v[4], dg0: v[5] };
        let mut up = base;
        up[which] += bump;
        let lo = assemble_i0(&make(base), &eps).unwrap();
        let hi = assemble_i0(&make(up), &eps).unwrap();
        prop_assert!(lo >= 0.0 && hi >= lo);
    }
}

fn random_field(n_nodes: usize, n_paths: usize, seed: u64, scale: f64) -> ProcessField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = ProcessField::zeros(n_nodes, n_paths, 1);
    for i in 0..n_nodes {
        for p in 0..n_paths {
            f.get_mut(i, p)[0] = scale * rng.gen_range(-1.0..1.0);
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_are_nonnegative_and_sup_dominates(seed in 0u64..1000, c in 0.0f64..2.0, scale in 0.0f64..3.0) {
        let ens = tree(4, 0.0, 1.0);
        let reg = Regressor::new(&ens, &BasisSpec::filtration()).unwrap();
        let np = ens.n_paths();
        let u: Vec<ProcessField> = (0..5).map(|j| random_field(5, np, seed + j, scale)).collect();
        let v: Vec<ProcessField> = (0..5).map(|j| random_field(5, np, seed + 100 + j, scale)).collect();
        let (sup, per_s) = family_norms(&u, &v, c, &ens, &reg);
        for r in &per_s {
            prop_assert!(r.s_inf >= 0.0 && r.h2 >= 0.0 && r.bmo_sq >= 0.0);
            prop_assert!(sup.s_inf >= r.s_inf && sup.h2 >= r.h2 && sup.bmo_sq >= r.bmo_sq);
        }
        let single = weighted_norms(Some(&u[2]), Some(&v[2]), c, &ens, &reg);
        prop_assert_eq!(single, per_s[2]);
        // The BMO estimate includes t = 0, where it is the H² norm squared.
        prop_assert!(single.bmo_sq + 1e-12 >= single.h2 * single.h2);
    }

    #[test]
    fn diagonal_inequality_holds_on_random_families(seed in 0u64..1000, eps in 0.1f64..5.0, c in 0.0f64..1.0) {
        let ens = tree(4, 0.0, 1.0);
        let np = ens.n_paths();
        let v: Vec<ProcessField> = (0..5).map(|j| random_field(5, np, seed + j, 1.0)).collect();
        let dv: Vec<ProcessField> = (0..5).map(|j| random_field(5, np, seed + 50 + j, 2.0)).collect();
        let check = diagonal_energy_check(&v, &dv, c, eps, &ens);
        prop_assert!(check.pass, "{:?}", check);
    }
}

#[test]
fn diagonal_inequality_on_synthetic_families() {
    let ens = tree(5, 0.0, 1.0);
    let grid = ens.grid().clone();
    let np = ens.n_paths();
    let n = grid.n_steps();
    let members = |f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<ProcessField> {
        (0..=n)
            .map(|j| {
                let s = grid.t(j);
                ProcessField::from_fn(n + 1, np, 1, |i, p, o| o[0] = f(s, grid.t(i), ens.x(p, i)[0]))
            })
            .collect()
    };
    // Constant in s, linear in s, and oscillating in s.
    type Field<'a> = &'a dyn Fn(f64, f64, f64) -> f64;
    let cases: [(Field, Field); 3] = [
        (&|_, _, x| x.cos(), &|_, _, _| 0.0),
        (&|s, t, x| s * x + t, &|_, _, x| x),
        (&|s, _, x| (3.0 * s).sin() * x, &|s, _, x| 3.0 * (3.0 * s).cos() * x),
    ];
    for (k, (v, dv)) in cases.iter().enumerate() {
        let (v, dv) = (members(v), members(dv));
        for eps in [0.5, 1.0, 2.0] {
            let check = diagonal_energy_check(&v, &dv, 0.3, eps, &ens);
            assert!(check.pass, "case {k}, ε = {eps}: {check:?}");
        }
    }
}
