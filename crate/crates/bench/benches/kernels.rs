use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use inchworm_core::mesh::InterpKind;
use inchworm_core::ode_mc::{toy_model_experiment, ToyExperiment};
use inchworm_core::{rng, solve_grid, BathSpec, Correlation, CorrelationTable, Inchworm, Mode, Node, SchemeConfig, SystemSpec};

fn correlation(c: &mut Criterion) {
    let bath = BathSpec::default();
    let table = CorrelationTable::new(&bath, 12.0).unwrap();
    let mut group = c.benchmark_group("correlation");
    group.bench_function("direct", |b| b.iter(|| bath.correlation(black_box(0.3), black_box(4.7))));
    group.bench_function("table", |b| b.iter(|| table.correlation(black_box(0.3), black_box(4.7))));
    group.finish();
}

fn slope(c: &mut Criterion) {
    let system = SystemSpec::default();
    let bath = BathSpec::default();
    let table = CorrelationTable::new(&bath, 4.0).unwrap();
    let det = SchemeConfig { mode: Mode::Deterministic, ..SchemeConfig::new(8, 2.0) };
    let grid = Inchworm::new(system, &table, det).unwrap().solve(0).unwrap();
    let mut group = c.benchmark_group("slope_mc");
    for mbar in [1, 3] {
        let solver = Inchworm::new(system, &table, SchemeConfig { mbar, ..SchemeConfig::new(8, 2.0) }).unwrap();
        let mut r = rng::stream(1, &[]);
        group.bench_with_input(BenchmarkId::new("ns64", mbar), &mbar, |b, _| {
            b.iter(|| solver.slope_mc(&grid, &InterpKind::Standard, Node::Regular(14), Node::Regular(2), 64, &mut r))
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let system = SystemSpec::default();
    let bath = BathSpec::default();
    let mut group = c.benchmark_group("solve_grid");
    group.sample_size(10);
    for (n, t, mbar) in [(10, 1.0, 1), (16, 2.0, 3)] {
        let table = CorrelationTable::new(&bath, 2.0 * t).unwrap();
        let cfg = SchemeConfig { ns: 4, mbar, ..SchemeConfig::new(n, t) };
        let mut rep = 0u64;
        group.bench_function(format!("N{n}_M{mbar}"), |b| {
            b.iter(|| {
                rep += 1;
                solve_grid(&system, &table, &cfg, rep).unwrap()
            })
        });
    }
    group.finish();
}

fn toy(c: &mut Criterion) {
    let cfg = ToyExperiment { k: 1.0, t_final: 1.0, h: 0.25, ns: 100, n_exp: 1000, seed: 0 };
    c.bench_function("toy_model_1000_reps", |b| b.iter(|| toy_model_experiment(black_box(&cfg)).unwrap()));
}

criterion_group!(benches, correlation, slope, solve, toy);
criterion_main!(benches);
