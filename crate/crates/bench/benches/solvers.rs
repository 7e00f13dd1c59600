use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use nflab_core::dynamics::{self, Variant};
use nflab_core::elliptic;
use nflab_core::mollifier::{convolve_zero_extended, KernelStencil};
use nflab_core::spectra;
use nflab_core::{Grid, ModelParams, ScalarField, SplitMix64, VectorField};

fn seeded_vector(grid: Grid, seed: u64, amp: f64) -> VectorField {
    let mut rng = SplitMix64::new(seed);
    VectorField::from_components(
        (0..grid.dim())
            .map(|_| {
                ScalarField::from_values(
                    grid,
                    (0..grid.node_count())
                        .map(|_| rng.next_symmetric(amp))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn bench_pressure_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("pressure_solve");
    for (label, grid) in [("1d_n255", Grid::new(1, 255)), ("2d_n63", Grid::new(2, 63))] {
        let m = seeded_vector(grid, 11, 1.0);
        let s = ScalarField::constant(grid, 1.0);
        group.bench_function(label, |b| {
            b.iter(|| elliptic::solve_pressure(black_box(&m), black_box(&s), 1e-10).unwrap())
        });
    }
    group.finish();
}

fn bench_step(c: &mut Criterion) {
    let grid = Grid::new(1, 255);
    let params = ModelParams {
        d: 0.1,
        dt0: 1e-3,
        dt_max: 1e-3,
        ..Default::default()
    };
    let s = ScalarField::constant(grid, 1.0);
    let m0 = seeded_vector(grid, 5, 0.3);
    let state = dynamics::SimState::init(m0, &s, &params).unwrap();
    c.bench_function("step_1d_n255", |b| {
        b.iter(|| dynamics::step(black_box(&state), &s, &params).unwrap())
    });
}

fn bench_sigma1(c: &mut Criterion) {
    let grid = Grid::new(1, 255);
    let s = ScalarField::constant(grid, 1.0);
    let p0 = elliptic::solve_pressure(&VectorField::zeros(grid), &s, 1e-12).unwrap();
    c.bench_function("sigma1_1d_n255", |b| {
        b.iter(|| spectra::sigma1(black_box(&p0), 1e-10).unwrap())
    });
}

fn bench_convolution(c: &mut Criterion) {
    let grid = Grid::new(2, 63);
    let kernel = KernelStencil::heat_kernel(1e-3, grid);
    let mut rng = SplitMix64::new(3);
    let f = ScalarField::from_values(
        grid,
        (0..grid.node_count())
            .map(|_| rng.next_symmetric(1.0))
            .collect(),
    );
    c.bench_function("heat_kernel_convolve_2d_n63", |b| {
        b.iter(|| convolve_zero_extended(black_box(&f), &kernel))
    });
}

fn bench_simulate_short(c: &mut Criterion) {
    let grid = Grid::new(1, 127);
    let params = ModelParams {
        d: 0.05,
        dt0: 1e-3,
        dt_max: 1e-2,
        t_end: 0.1,
        steady_tol: 1e-14,
        ..Default::default()
    };
    let s = ScalarField::constant(grid, 1.0);
    let m0 = seeded_vector(grid, 21, 0.3);
    c.bench_function("simulate_1d_n127_t0p1", |b| {
        b.iter(|| dynamics::simulate(black_box(&m0), &s, &params, Variant::Standard).unwrap())
    });
}

criterion_group!(
    benches,
    bench_pressure_solve,
    bench_step,
    bench_sigma1,
    bench_convolution,
    bench_simulate_short
);
criterion_main!(benches);
