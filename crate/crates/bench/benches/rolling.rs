//! Benchmarks for the heavy paths: flag computation, trajectory
//! integration, and parallel transport.

use criterion::{criterion_group, criterion_main, Criterion};
use rollkit_core::connection::{parallel_transport, SampledCurve};
use rollkit_core::flag::{controllability_report, FlagOptions};
use rollkit_core::rolling::{integrate_rolling, ConfigPoint, Control, ManifoldPair, Stepper};
use rollkit_core::{euclidean, se3, se3_flat, sphere};

fn flag_benches(c: &mut Criterion) {
    let pair2 = ManifoldPair::new(sphere(2, true), euclidean(2)).unwrap();
    let q2 = ConfigPoint::canonical(&pair2);
    c.bench_function("flag_sphere_plane_2d", |b| {
        b.iter(|| controllability_report(&pair2, &q2, 6, FlagOptions::default()).unwrap())
    });
    let pair6 = ManifoldPair::new(se3(), se3_flat()).unwrap();
    let q6 = ConfigPoint::canonical(&pair6);
    c.bench_function("flag_se3", |b| {
        b.iter(|| controllability_report(&pair6, &q6, 6, FlagOptions::default()).unwrap())
    });
}

fn integrate_benches(c: &mut Criterion) {
    let pair = ManifoldPair::new(se3(), se3_flat()).unwrap();
    let q0 = ConfigPoint::canonical(&pair);
    let control = Control::constant(vec![std::f64::consts::SQRT_2, 0.0, 0.0, 0.0, 0.0, 1.0]);
    c.bench_function("integrate_se3_rk4_1k_steps", |b| {
        b.iter(|| integrate_rolling(&pair, &q0, &control, 1.0, 1e-3, Stepper::Rk4).unwrap())
    });
    c.bench_function("integrate_se3_exp_1k_steps", |b| {
        b.iter(|| integrate_rolling(&pair, &q0, &control, 1.0, 1e-3, Stepper::ExactExp).unwrap())
    });
}

fn transport_benches(c: &mut Criterion) {
    let chart = sphere(2, true);
    let phi = std::f64::consts::FRAC_PI_3;
    let curve = SampledCurve::from_fn(
        |t| vec![phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()],
        0.0,
        2.0 * std::f64::consts::PI,
        2000,
    )
    .unwrap();
    c.bench_function("transport_latitude_2k_nodes", |b| {
        b.iter(|| parallel_transport(&chart, &curve, &[1.0, 0.0]).unwrap())
    });
}

criterion_group!(benches, flag_benches, integrate_benches, transport_benches);
criterion_main!(benches);
