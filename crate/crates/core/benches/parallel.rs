//! Rayon worker pool versus a single worker on the hot parallel loops.
//! The single-worker pool runs the same code path as a build without the
//! `parallel` feature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use positionforge::analysis::{block_bootstrap, logistic_fit, EMPLOYMENT};
use positionforge::gnn::{init_model, train, GnnHyperParams, GraphSchema};
use positionforge::hetgraph::split_edges;
use positionforge::irt::{eap_scores, fit_graded, QuadratureSpec};
use positionforge::synth::{planted_graph, simulate_irt, simulate_logistic, PlantedSpec};
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        (
            "sequential",
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (
            "rayon",
            ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap(),
        ),
    ]
}

fn irt_em(c: &mut Criterion) {
    let sim = simulate_irt(500, 60, 0.8, 1);
    let q = QuadratureSpec::default();
    let mut group = c.benchmark_group("irt_em");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let model = fit_graded(&sim.matrix, &q, 20, 1e-6).unwrap();
                    eap_scores(&model, &sim.matrix, &q)
                })
            })
        });
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let (d, y) = simulate_logistic(2000, 0.1, 0.5, 2);
    let rows: Vec<(String, f64, bool)> = (0..2000)
        .map(|i| (format!("f{}", i / 4), d.x[[i, 1]], y[i]))
        .collect();
    let stat = |s: &[&(String, f64, bool)]| {
        let x = ndarray::Array2::from_shape_fn(
            (s.len(), 2),
            |(i, j)| if j == 0 { 1.0 } else { s[i].1 },
        );
        let design = positionforge::analysis::DesignMatrix {
            columns: vec!["(Intercept)".into(), EMPLOYMENT.into()],
            x,
        };
        let y: Vec<bool> = s.iter().map(|r| r.2).collect();
        let ids: Vec<String> = s.iter().map(|r| r.0.clone()).collect();
        Ok(vec![logistic_fit(&design, &y, &ids)?.coef[1]])
    };
    let mut group = c.benchmark_group("block_bootstrap");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| block_bootstrap(&rows, |r| r.0.as_str(), stat, 200, 3).unwrap())
            })
        });
    }
    group.finish();
}

fn gnn_epochs(c: &mut Criterion) {
    let (g, edges) = planted_graph(&PlantedSpec::default(), 4);
    let split = split_edges(&edges, (7, 1, 2), 4).unwrap();
    let hp = GnnHyperParams {
        epochs: 10,
        seed: 4,
        ..Default::default()
    };
    let model = init_model(&GraphSchema::of(&g), &hp, 4).unwrap();
    let mut group = c.benchmark_group("gnn_train_10_epochs");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| train(&model, &g, &split, &hp).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, irt_em, bootstrap, gnn_epochs);
criterion_main!(benches);
