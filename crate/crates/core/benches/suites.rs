use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use steering_core::assemblage::singlet_xz;
use steering_core::monotones::{relative_entropy_of_steering, RelEntropyOptions};
use steering_core::par::ExecMode;
use steering_core::suite::{run_one, SuiteConfig, SuiteKind};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn suites(c: &mut Criterion) {
    let mut group = c.benchmark_group("suite");
    group.sample_size(10);
    for kind in [SuiteKind::LhsClosure, SuiteKind::Monotonicity] {
        for (name, mode) in MODES {
            let config = SuiteConfig { trials: Some(8), fixtures: 4, suites: vec![kind], mode, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(kind.name(), name), &config, |b, config| {
                b.iter(|| run_one(kind, config).unwrap())
            });
        }
    }
    group.finish();
}

fn rel_entropy_restarts(c: &mut Criterion) {
    let mut group = c.benchmark_group("rel-entropy-restarts");
    group.sample_size(10);
    let ass = singlet_xz();
    for (name, mode) in MODES {
        let opts = RelEntropyOptions { n_restarts: 8, mode, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| relative_entropy_of_steering(&ass, &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, suites, rel_entropy_restarts);
criterion_main!(benches);
