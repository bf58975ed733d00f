//! Parallel versus sequential sweeps of independent solves.
//!
//! Each sweep item is one full Poisson solve (a stand-in for one ε-run of the
//! harness) or one kernel row of the normal-form scan. With a single core
//! both paths should cost the same; the gap measures the pool overhead.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nlslab::normal_form::{Family, KernelSpec, NormalForm};
use nlslab::par::{par_map, seq_map};
use nlslab::poisson::{solve_phi, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nlslab::{Field, PeriodicGrid};

fn poisson_item(a: &f64) -> f64 {
    let g = PeriodicGrid::new(2.0 * PI, 256).unwrap();
    let n = Field::from_fn(g, |x| 1.0 + a * x.cos() + 0.5 * a * (3.0 * x).sin());
    solve_phi(&n, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().residual
}

fn kernel_item(nf: &NormalForm, k: f64) -> f64 {
    let mut acc = 0.0;
    for n in 1..=5 {
        for (j1, j2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let spec = KernelSpec::new(Family::B11, n, j1, j2);
            for i in 0..64 {
                let l = 0.95 + 0.1 * i as f64 / 63.0;
                acc += nf.eval(&spec, k, l, k - l).unwrap().re;
            }
        }
    }
    acc
}

fn bench(c: &mut Criterion) {
    let amps: Vec<f64> = (1..=16).map(|i| 0.01 * i as f64).collect();
    let mut g = c.benchmark_group("poisson_sweep");
    g.bench_with_input(BenchmarkId::new("parallel", amps.len()), &amps, |b, a| b.iter(|| black_box(par_map(a, poisson_item))));
    g.bench_with_input(BenchmarkId::new("sequential", amps.len()), &amps, |b, a| b.iter(|| black_box(seq_map(a, poisson_item))));
    g.finish();

    let nf = NormalForm::new(1.0, 0.05, 0.1).unwrap();
    let ks: Vec<f64> = (0..256).map(|i| 1.2 + 0.1 * i as f64).collect();
    let mut g = c.benchmark_group("kernel_scan");
    g.bench_with_input(BenchmarkId::new("parallel", ks.len()), &ks, |b, ks| {
        b.iter(|| black_box(par_map(ks, |&k| kernel_item(&nf, k))))
    });
    g.bench_with_input(BenchmarkId::new("sequential", ks.len()), &ks, |b, ks| {
        b.iter(|| black_box(seq_map(ks, |&k| kernel_item(&nf, k))))
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
