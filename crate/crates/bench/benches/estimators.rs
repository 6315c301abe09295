use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lyapopt::experiments::ensemble_lle;
use lyapopt::lyapunov::estimate_lle;
use lyapopt::mlp::{gradient, Dataset};
use lyapopt::{EstimatorConfig, LogBase, NetworkConfig};
use lyapopt_bench::{lorenz_trajectory, small_experiment};

fn bench_gradient(c: &mut Criterion) {
    let net = NetworkConfig::default();
    let data = Dataset::xor();
    let params = vec![0.3; net.param_dim()];
    c.bench_function("gradient_xor_h2", |b| {
        b.iter(|| gradient(&net, black_box(&params), &data).unwrap())
    });
}

fn bench_neighbor_estimator(c: &mut Criterion) {
    let traj = lorenz_trajectory(20_000);
    let cfg = EstimatorConfig {
        epsilon: 0.05,
        tau: 50,
        theiler_window: 500,
        log_base: LogBase::E,
        ..Default::default()
    };
    c.bench_function("estimate_lle_lorenz_20k", |b| {
        b.iter(|| estimate_lle(black_box(&traj), &cfg).unwrap())
    });
}

fn bench_ensemble(c: &mut Criterion) {
    let cfg = small_experiment(2_000);
    c.bench_function("ensemble_lle_2k_steps", |b| {
        b.iter(|| ensemble_lle(black_box(&cfg), 0.1, 0).unwrap())
    });
}

criterion_group!(benches, bench_gradient, bench_neighbor_estimator, bench_ensemble);
criterion_main!(benches);
