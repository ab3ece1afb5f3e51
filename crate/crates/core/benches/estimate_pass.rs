// Full estimate pass and a short end-to-end k-means run, timed on a single
// worker and on the default pool. Build with `--no-default-features` to
// time the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use weakstrong::datasets::{generate_sbm, SbmSpec};
use weakstrong::estimator::{CenterState, EstimateCache};
use weakstrong::kmeans::{kmeans_weak_strong, KMeansWSParams};
use weakstrong::{with_workers, Corruption, Metric, PointId, StrongOracle, WeakOracle, WeakOracleConfig};

fn setup(n: usize) -> (Metric, WeakOracleConfig) {
    let metric: Metric = generate_sbm(&SbmSpec::new(n, 7, 1)).unwrap().into();
    (metric, WeakOracleConfig::new(0.3, Corruption::LabelSwap, 2))
}

fn worker_counts() -> Vec<(String, Option<usize>)> {
    let all = std::thread::available_parallelism().map_or(1, |p| p.get());
    let mut v = vec![("1-worker".to_string(), Some(1))];
    if cfg!(feature = "parallel") {
        v.push((format!("{all}-workers"), None));
    }
    v
}

fn estimate_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_pass");
    group.sample_size(10);
    for n in [2000, 8000] {
        let (metric, cfg) = setup(n);
        let mut strong = StrongOracle::new(&metric);
        let init: Vec<PointId> = (0..40).map(|i| PointId(i * (n / 40))).collect();
        let state = CenterState::new(&mut strong, &init, 20).unwrap();
        for (label, workers) in worker_counts() {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, &n| {
                b.iter(|| {
                    with_workers(workers, || {
                        let mut weak = WeakOracle::new(&metric, cfg).unwrap();
                        let mut cache = EstimateCache::new(n);
                        black_box(cache.refresh_all(&mut weak, &state).unwrap())
                    })
                })
            });
        }
    }
    group.finish();
}

fn kmeans_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans_weak_strong");
    group.sample_size(10);
    let n = 3000;
    let (metric, cfg) = setup(n);
    let mut params = KMeansWSParams::new(7, 0.1, 3);
    params.estimator.c_ball = 0.01;
    params.t_override = Some(30);
    for (label, workers) in worker_counts() {
        group.bench_function(BenchmarkId::new(label, n), |b| {
            b.iter(|| {
                with_workers(workers, || {
                    let mut weak = WeakOracle::new(&metric, cfg).unwrap();
                    let mut strong = StrongOracle::new(&metric);
                    black_box(kmeans_weak_strong(&mut weak, &mut strong, &params).unwrap().bicriteria.cost)
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, estimate_pass, kmeans_run);
criterion_main!(benches);
