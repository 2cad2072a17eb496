use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evoctl_core::levelset::{fit, SheetEntry, SolutionSheet, SweepGrid};
use evoctl_core::*;

fn two_level() -> (QuantumModel, SystemParams) {
    let model = QuantumModel::two_level("sigma_z", Interval::new(0.5, 1.5).unwrap(), Interval::new(0.5, 2.0).unwrap()).unwrap();
    let params = map_scale(&model, &ScaleVector::new(vec![1.0]).unwrap(), &[1.0]).unwrap();
    (model, params)
}

fn control() -> ControlParams {
    ControlParams::from_flat(&[0.6, 5.0, 2.0, 1.0]).unwrap()
}

fn propagation(c: &mut Criterion) {
    let (model, params) = two_level();
    let b = control();
    let mut group = c.benchmark_group("propagate_forward");
    for steps in [500, 2000, 10_000] {
        let grid = TimeGrid::new(10.0, steps).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &grid, |bench, grid| {
            bench.iter(|| propagate_forward(&model, &params, black_box(&b), grid).unwrap())
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let (model, params) = two_level();
    let weights = CostWeights::new(100.0, 1e-3, -1.0).unwrap();
    let b = control();
    let mut group = c.benchmark_group("cost_and_gradient");
    for steps in [500, 2000] {
        let grid = TimeGrid::new(10.0, steps).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(steps), &grid, |bench, grid| {
            bench.iter(|| cost_and_gradient(&model, &params, black_box(&b), grid, &weights).unwrap())
        });
    }
    group.finish();
}

fn spline(c: &mut Criterion) {
    let axis = |n: usize| (0..n).map(|i| i as f64 / (n - 1) as f64).collect::<Vec<_>>();
    let grid = SweepGrid::new(vec![axis(21)], vec![axis(21)]).unwrap();
    let entries = (0..grid.node_count())
        .map(|i| {
            let index = grid.unravel(i);
            let (s, c) = grid.coordinates(&index);
            let b = vec![s[0].sin() + c[0], 5.0 + s[0] * c[0], 2.0 + c[0] * c[0], 1.0 + s[0]];
            SheetEntry {
                index,
                s,
                c,
                b: Some(b),
                total: 0.0,
                deviation: 0.0,
                intensity: 0.0,
                converged: true,
                branch: None,
                iterations: 0,
                warm_start_from: None,
                error: None,
            }
        })
        .collect();
    let sheet = SolutionSheet::from_entries(grid, entries, vec![], None).unwrap();
    let interp = fit(&sheet).unwrap();
    let branch = interp.branch(0).unwrap();
    c.bench_function("spline_evaluate_21x21", |bench| {
        bench.iter(|| branch.evaluate(black_box(&[0.37, 0.61]), false).unwrap())
    });
}

criterion_group!(benches, propagation, gradient, spline);
criterion_main!(benches);
