use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use voltra::lemmas::verify_scalar_lemmas;
use voltra::presets::SmallQuadratic;
use voltra::{
    backward_sweep, build_grid, picard_solve, simulate_forward, BasisSpec, ConstantVolatility, PicardOptions, Point,
    Regressor, Scheme,
};
use voltra_bench::fixture;

fn simulation(c: &mut Criterion) {
    let grid = build_grid(1.0, 16).unwrap();
    let vol = ConstantVolatility::scalar(1.0);
    c.bench_function("simulate 16 × 20k", |b| {
        b.iter(|| simulate_forward(&vol, &[0.0], &grid, black_box(20_000), 7).unwrap())
    });
}

fn regression(c: &mut Criterion) {
    let (ens, _) = fixture(16, 20_000);
    let mut group = c.benchmark_group("regressor");
    for degree in [1, 3, 5] {
        group.bench_with_input(BenchmarkId::new("factorise", degree), &degree, |b, &d| {
            b.iter(|| Regressor::new(&ens, &BasisSpec::polynomial(d)).unwrap())
        });
    }
    group.finish();
    let reg = Regressor::new(&ens, &BasisSpec::polynomial(3)).unwrap();
    let values: Vec<f64> = (0..ens.n_paths()).map(|p| ens.x(p, 16)[0].sin()).collect();
    c.bench_function("project one node", |b| b.iter(|| reg.project(8, black_box(&values), 1)));
}

fn sweep(c: &mut Criterion) {
    let (ens, reg) = fixture(16, 20_000);
    let terminal: Vec<f64> = (0..ens.n_paths()).map(|p| ens.x(p, 16)[0].cos()).collect();
    let driver = |_: &Point<'_>, y: &[f64], z: &[f64], out: &mut [f64]| out[0] = -0.5 * y[0] + 0.1 * z[0] * z[0];
    for (name, scheme) in [("explicit", Scheme::Explicit), ("implicit", Scheme::Implicit { damping: 1.0 })] {
        c.bench_function(&format!("backward sweep {name}"), |b| {
            b.iter(|| backward_sweep(black_box(&terminal), 1, &driver, &ens, &reg, scheme).unwrap())
        });
    }
}

fn picard(c: &mut Criterion) {
    let (ens, reg) = fixture(8, 4_000);
    let sys = SmallQuadratic { l: 0.1, amplitude: 2e-3 };
    let opts = PicardOptions { tol: 1e-10, c: 0.2, ..Default::default() };
    let mut group = c.benchmark_group("picard");
    group.sample_size(10);
    group.bench_function("small quadratic 8 × 4k", |b| b.iter(|| picard_solve(&sys, &ens, &reg, &opts, None).unwrap()));
    group.finish();
}

fn lemmas(c: &mut Criterion) {
    let mut group = c.benchmark_group("lemmas");
    group.sample_size(10);
    group.bench_function("brute force 1000", |b| b.iter(|| verify_scalar_lemmas(black_box(1000)).unwrap()));
    group.finish();
}

criterion_group!(benches, simulation, regression, sweep, picard, lemmas);
criterion_main!(benches);
