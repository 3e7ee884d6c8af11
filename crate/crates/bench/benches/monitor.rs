use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsrv_bench::workloads;
use dsrv_core::analysis;
use dsrv_core::monitor::{self, CommMode};
use dsrv_core::oracle;
use dsrv_core::terms::Simplifier;
use dsrv_core::RunConfig;

fn centralized(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    for w in workloads(2000) {
        g.bench_function(w.name, |b| b.iter(|| oracle::evaluate(black_box(&w.spec), black_box(&w.inputs)).unwrap()));
    }
    g.finish();
}

fn decentralized(c: &mut Criterion) {
    let mut g = c.benchmark_group("monitor");
    g.sample_size(20);
    let modes = [
        ("declared", CommMode::Declared, Simplifier::Full),
        ("eager", CommMode::Eager, Simplifier::Full),
        ("lazy", CommMode::Lazy, Simplifier::Full),
        ("lazy-strict", CommMode::Lazy, Simplifier::Strict),
    ];
    for w in workloads(2000) {
        for (label, comm, simplifier) in modes {
            let cfg = RunConfig { comm, simplifier, ..RunConfig::default() };
            g.bench_with_input(BenchmarkId::new(w.name, label), &cfg, |b, cfg| {
                b.iter(|| monitor::run(&w.spec, &w.inputs, &w.model, cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn bounds(c: &mut Criterion) {
    let mut g = c.benchmark_group("bounds");
    g.sample_size(20);
    for w in workloads(2000) {
        let r = monitor::run(&w.spec, &w.inputs, &w.model, &RunConfig::default()).unwrap();
        g.bench_function(w.name, |b| b.iter(|| analysis::bounds(&r.program, r.len, &r.trace).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, centralized, decentralized, bounds);
criterion_main!(benches);
