use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use regnoise::drift::DriftSpec;
use regnoise::estimates::{sigma_scan, ScanConfig};
use regnoise::exec::Execution;
use regnoise::solver::{uniqueness_experiment, MildSolveConfig, UniquenessConfig};
use regnoise::spectral::{ensemble_at, SpectralOperator, TimeGrid};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_ensemble(c: &mut Criterion) {
    let op = SpectralOperator::power_law(16, 2.0).unwrap();
    let grid = TimeGrid::dyadic(8);
    let mut group = c.benchmark_group("ou_ensemble");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, 4096), |b| {
            b.iter(|| ensemble_at(&op, &grid, 256, black_box(4096), 1, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sigma_scan(c: &mut Criterion) {
    let op = SpectralOperator::power_law(8, 2.0).unwrap();
    let drift = DriftSpec::sign_envelope(7.0, 8, 1.0, 0.0).unwrap();
    let mut group = c.benchmark_group("sigma_scan");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ScanConfig { exec, ..ScanConfig::new(vec![4, 6], 64, 7.0, 1) };
        group.bench_function(name, |b| b.iter(|| sigma_scan(&drift, &op, black_box(&cfg)).unwrap()));
    }
    group.finish();
}

fn bench_uniqueness(c: &mut Criterion) {
    let op = SpectralOperator::power_law(8, 2.0).unwrap();
    let drift = DriftSpec::sign_envelope(7.0, 8, 1.0, 0.0).unwrap();
    let mut group = c.benchmark_group("uniqueness");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = UniquenessConfig {
            paths: 8,
            inits: 3,
            solve: MildSolveConfig { grid: TimeGrid::dyadic(8), ..Default::default() },
            x0: vec![0.0; 8],
            gamma: 7.0,
            seed: 1,
            exec,
        };
        group.bench_function(name, |b| b.iter(|| uniqueness_experiment(&drift, &op, black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_ensemble, bench_sigma_scan, bench_uniqueness);
criterion_main!(benches);
