//! Compares the data-parallel core against single-threaded execution.
//!
//! The same per-subdomain kernels run once inside a one-thread rayon pool
//! and once inside a default-sized pool, for the two hot operations of a
//! solve: the matrix-free interface operator and the BDDC preconditioner.
//! Built without the `parallel` feature the crate is sequential by
//! construction and only the baseline numbers are produced.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use num_complex::Complex;
use std::hint::black_box;

use pwls_bddc::assembly::BoundaryCondition;
use pwls_bddc::coarse::{CoarseParams, Scaling};
use pwls_bddc::mesh::MeshConfig;
use pwls_bddc::schur::{BlockMode, SchurSystem};
use pwls_bddc::solver::{build_solver, LevelOperator, SolverOptions};

fn setup() -> LevelOperator {
    let mesh = MeshConfig { n: 2, m: 2, p: 15, kappa: 4.0 * std::f64::consts::PI };
    let sys = SchurSystem::build(mesh, BoundaryCondition::Robin).unwrap();
    let opts = SolverOptions {
        params: CoarseParams { scaling: Scaling::Deluxe, theta_f: 8.0, theta_e: 1000.0 },
        mode: BlockMode::Exact,
        ..SolverOptions::default()
    };
    build_solver(sys, &opts).unwrap().0
}

fn probe(n: usize) -> DVector<Complex<f64>> {
    DVector::from_fn(n, |i, _| {
        // Deterministic, fully populated probe vector.
        Complex::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())
    })
}

fn bench_ops(c: &mut Criterion) {
    let op = setup();
    let x = probe(op.dd.n_iface());

    #[cfg(feature = "parallel")]
    {
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let parallel = rayon::ThreadPoolBuilder::new().build().unwrap();
        let mut g = c.benchmark_group("interface-apply");
        g.bench_function("serial-1-thread", |b| {
            b.iter(|| serial.install(|| black_box(op.apply_iface(black_box(&x)))))
        });
        g.bench_function("parallel-pool", |b| {
            b.iter(|| parallel.install(|| black_box(op.apply_iface(black_box(&x)))))
        });
        g.finish();

        let mut g = c.benchmark_group("preconditioner-apply");
        g.bench_function("serial-1-thread", |b| {
            b.iter(|| serial.install(|| black_box(op.apply_preconditioner(black_box(&x)))))
        });
        g.bench_function("parallel-pool", |b| {
            b.iter(|| parallel.install(|| black_box(op.apply_preconditioner(black_box(&x)))))
        });
        g.finish();
    }

    #[cfg(not(feature = "parallel"))]
    {
        c.bench_function("interface-apply/sequential", |b| {
            b.iter(|| black_box(op.apply_iface(black_box(&x))))
        });
        c.bench_function("preconditioner-apply/sequential", |b| {
            b.iter(|| black_box(op.apply_preconditioner(black_box(&x))))
        });
    }
}

criterion_group!(benches, bench_ops);
criterion_main!(benches);
