//! Sequential vs rayon execution for the data-parallel workloads.
//!
//! Build with `--no-default-features` to check that the sequential fallback
//! is what `Execution::Parallel` degrades to.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nhbloch::fit::{fidelity_trace_with, monte_carlo_fits, noisy_trajectory, DecayParams, FitOptions};
use nhbloch::presets::{DSP, TPP};
use nhbloch::simulate::{sample_analytic, simulate, uniform_grid, Model};
use nhbloch::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn analytic_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("analytic_sampling");
    let (h, d) = (TPP.field(), TPP.decay());
    for n in [10_001, 200_001] {
        let grid = uniform_grid(500e-6, n).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &grid, |b, grid| {
                b.iter(|| sample_analytic(&h, Some(&d), black_box(grid), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_fits");
    group.sample_size(10);
    let p = DecayParams::from_model(&TPP.decay(), TPP.drive());
    let grid = uniform_grid(500e-6, 251).unwrap();
    let seeds: Vec<u64> = (0..32).collect();
    let opts = FitOptions::reference_ratio();
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| monte_carlo_fits(&p, &grid, 0.01, black_box(&seeds), &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn fidelity(c: &mut Criterion) {
    let mut group = c.benchmark_group("fidelity_trace");
    let (h, d) = (TPP.field(), TPP.decay());
    let grid = uniform_grid(500e-6, 100_001).unwrap();
    let theory = sample_analytic(&h, Some(&d), &grid, Execution::Parallel).unwrap();
    let measured = noisy_trajectory(&theory, 0.01, 1).unwrap();
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| fidelity_trace_with(&theory, black_box(&measured), exec).unwrap()));
    }
    group.finish();
}

fn ode_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("ode_batch");
    group.sample_size(10);
    let grid = uniform_grid(500e-6, 251).unwrap();
    let jobs: Vec<_> = [TPP, DSP]
        .into_iter()
        .flat_map(|p| [Model::OdeBloch, Model::OdeDensity].map(|m| (p, m)))
        .collect();
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                exec.map(&jobs, |(p, m)| {
                    simulate(*m, &p.field(), Some(&p.decay()), &grid, Execution::Sequential).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, analytic_sampling, monte_carlo, fidelity, ode_batch);
criterion_main!(benches);
