use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noma_bench::{feasible_start, network};
use noma_core::graph::{build_graph, find_negative_loop_eba, find_negative_loop_fga};
use noma_core::{run_game, solve_all_powers, LoopFinder};

fn power(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_all_powers");
    for users in [50, 65] {
        let (net, g) = feasible_start(users, 10);
        group.bench_with_input(BenchmarkId::from_parameter(users), &users, |b, _| {
            b.iter(|| solve_all_powers(black_box(&net), black_box(&g)))
        });
    }
    group.finish();
}

fn graph(c: &mut Criterion) {
    let (net, g) = feasible_start(50, 10);
    c.bench_function("build_graph", |b| b.iter(|| build_graph(black_box(&net), black_box(&g), 0)));
    let graph = build_graph(&net, &g, 0);
    c.bench_function("eba", |b| b.iter(|| find_negative_loop_eba(black_box(&graph))));
    c.bench_function("fga", |b| b.iter(|| find_negative_loop_fga(black_box(&graph), 5.0)));
}

fn game(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_game");
    group.sample_size(10);
    let net = network(50, 10, 0);
    group.bench_function("fga", |b| b.iter(|| run_game(black_box(&net), LoopFinder::fga())));
    group.bench_function("eba", |b| b.iter(|| run_game(black_box(&net), LoopFinder::Eba)));
    group.finish();
}

criterion_group!(benches, power, graph, game);
criterion_main!(benches);
