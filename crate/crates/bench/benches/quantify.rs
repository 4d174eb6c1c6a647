use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use riskctl_bench::{audit_log, rule_history, voting_tree};
use riskctl_core::fixtures;
use riskctl_core::indicators::{evaluate_rules, solve_min_kci};
use riskctl_core::register::verify_bytes;
use riskctl_core::riskmodel::{chain_residual_rate, eval_fault_tree, minimal_cut_sets};

fn fault_trees(c: &mut Criterion) {
    let mut g = c.benchmark_group("fault_tree");
    for n in [8, 10, 12] {
        let tree = voting_tree(n);
        g.bench_with_input(BenchmarkId::new("eval", n), &tree, |b, t| {
            b.iter(|| eval_fault_tree(black_box(t), None).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("cut_sets", n), &tree, |b, t| {
            b.iter(|| minimal_cut_sets(black_box(t)).unwrap())
        });
    }
    g.finish();
}

fn chains(c: &mut Criterion) {
    let chain = fixtures::cyber1_chain();
    let catalog = fixtures::cyber1_catalog();
    c.bench_function("chain_residual_rate", |b| {
        b.iter(|| chain_residual_rate(black_box(&chain), &()))
    });
    c.bench_function("solve_min_kci", |b| {
        b.iter(|| solve_min_kci(black_box(&chain), &catalog, 0.006, black_box(60.0)).unwrap())
    });
}

fn rules(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate_rules");
    for n in [100, 1_000, 10_000] {
        let (catalog, ms, window) = rule_history(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &ms, |b, ms| {
            b.iter(|| evaluate_rules(&catalog, black_box(ms), 10.0, &window).unwrap())
        });
    }
    g.finish();
}

fn audit(c: &mut Criterion) {
    let mut g = c.benchmark_group("audit_verify");
    for n in [100, 1_000] {
        let bytes = audit_log(n).encode();
        g.bench_with_input(BenchmarkId::from_parameter(n), &bytes, |b, bytes| {
            b.iter(|| verify_bytes(black_box(bytes)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, fault_trees, chains, rules, audit);
criterion_main!(benches);
