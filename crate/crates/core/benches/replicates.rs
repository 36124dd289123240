use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use overlay_heal::harness::run_all;
use overlay_heal::scenario::scenario;
use overlay_heal::{Execution, ExperimentConfig};

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = scenario(name).expect("registered scenario");
    cfg.replicates = 8;
    cfg.rounds = cfg.rounds.min(50);
    cfg
}

fn replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicates");
    group.sample_size(10);
    for name in ["uniform-evolution", "sf-attack"] {
        let cfg = small(name);
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, name), &cfg, |b, cfg| {
                b.iter(|| run_all(cfg, exec).expect("valid scenario"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);
