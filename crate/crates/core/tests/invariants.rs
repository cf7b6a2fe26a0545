//! Cross-cutting invariants: rank-threshold band stability, flag rank
//! invariance under configuration changes and difference steps, Jacobi
//! residuals, and tangency of bracket values to the constraint set.

use rollkit_core::flag::{
    compute_flag, controllability_report, lie_bracket_numeric, FlagOptions, VectorFieldHandle,
};
use rollkit_core::linalg::{exp_skew, Matrix, RankPolicy, SkewIndex};
use rollkit_core::rolling::{config_dim, rolling_fields, ConfigPoint, ManifoldPair};
use rollkit_core::{euclidean, se3, se3_flat, sphere};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn sphere_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        for v in x.iter_mut() {
            *v /= norm;
        }
        x[n] = x[n].abs();
        if x[n] > 0.3 {
            return x;
        }
    }
}

fn random_rotation(rng: &mut impl Rng, n: usize) -> Matrix {
    let mut skew = Matrix::zeros(n, n);
    for idx in SkewIndex::all(n) {
        let v = rng.gen_range(-1.5..1.5);
        skew[(idx.i - 1, idx.j - 1)] = v;
        skew[(idx.j - 1, idx.i - 1)] = -v;
    }
    exp_skew(&skew).unwrap()
}

#[test]
fn ranks_are_stable_across_thresholds_configurations_and_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // Sphere on plane, several dimensions, random configurations; the
    // integer ranks must not move under the rank threshold inside
    // [1e-10, 1e-6], under rotations of the isometry component, under base
    // point choice, or under the difference step used for the cross-check.
    for n in [2usize, 3] {
        let pair = ManifoldPair::new(sphere(n, true), euclidean(n)).unwrap();
        let expect_orbit = n * (n + 3) / 2;
        for _ in 0..5 {
            let q0 = ConfigPoint::new(
                &pair,
                sphere_point(&mut rng, n),
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                random_rotation(&mut rng, n),
            )
            .unwrap();
            for tau in [1e-10, 1e-8, 1e-6] {
                for (h, h_alt) in [(1e-5, 1e-4), (1e-4, 1e-5)] {
                    let report = controllability_report(
                        &pair,
                        &q0,
                        6,
                        FlagOptions {
                            h,
                            h_alt,
                            rank: RankPolicy { tau },
                            fd_cross_check: true,
                        },
                    )
                    .unwrap();
                    assert_eq!(report.orbit_dim, expect_orbit);
                    assert_eq!(report.step, 3);
                }
            }
        }
    }
    // Rigid motions: the rank sequence survives the same variations,
    // including a generic group point on the rolling side.
    let pair = ManifoldPair::new(se3(), se3_flat()).unwrap();
    let mut q0 = ConfigPoint::canonical(&pair);
    let c = random_rotation(&mut rng, 3);
    let mut x = c.as_slice().to_vec();
    x.extend((0..3).map(|_| rng.gen_range(-2.0..2.0)));
    q0.x = x;
    q0.a = random_rotation(&mut rng, 6);
    q0.x_hat = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for tau in [1e-10, 1e-8, 1e-6] {
        let report = controllability_report(
            &pair,
            &q0,
            6,
            FlagOptions {
                rank: RankPolicy { tau },
                fd_cross_check: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.ranks, vec![6, 9, 12, 12]);
    }
}

#[test]
fn jacobi_identity_residual_is_second_order_small() {
    let pair = ManifoldPair::new(sphere(3, true), euclidean(3)).unwrap();
    let fields = rolling_fields(&pair, false).unwrap();
    let q0 = ConfigPoint::canonical(&pair);
    let p = pair.state_to_rep(&q0);
    let h = 1e-5;
    let bracket_fd = |a: &VectorFieldHandle, b: &VectorFieldHandle| -> VectorFieldHandle {
        VectorFieldHandle::bracket(a, b)
    };
    let (x, y, z) = (&fields[0], &fields[1], &fields[2]);
    let terms = [
        lie_bracket_numeric(x, &bracket_fd(y, z), &p, h).unwrap(),
        lie_bracket_numeric(y, &bracket_fd(z, x), &p, h).unwrap(),
        lie_bracket_numeric(z, &bracket_fd(x, y), &p, h).unwrap(),
    ];
    let scale = terms
        .iter()
        .flat_map(|t| t.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for d in 0..p.len() {
        let sum: f64 = terms.iter().map(|t| t[d]).sum();
        assert!(
            sum.abs() <= 1e-4 * scale,
            "Jacobi residual {sum:e} at coordinate {d}"
        );
    }
}

#[test]
fn bracket_values_stay_tangent_to_the_constraint_set() {
    // On the sphere-on-plane configuration space: the sphere block of any
    // bracket value must be orthogonal to the sphere point, and the
    // isometry block must be tangent to the rotation group (A^T dA skew).
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 2usize;
    let pair = ManifoldPair::new(sphere(n, true), euclidean(n)).unwrap();
    let fields = rolling_fields(&pair, false).unwrap();
    let q0 = ConfigPoint::new(
        &pair,
        sphere_point(&mut rng, n),
        vec![0.3, -0.8],
        random_rotation(&mut rng, n),
    )
    .unwrap();
    let p = pair.state_to_rep(&q0);
    let mut level: Vec<VectorFieldHandle> = fields.clone();
    for _ in 0..2 {
        let mut next = Vec::new();
        for g in &fields {
            for f in &level {
                if g.label == f.label {
                    continue;
                }
                next.push(VectorFieldHandle::bracket(g, f));
            }
        }
        for f in &next {
            let v = f.eval_exact(&p);
            let scale = v.iter().fold(1.0f64, |m, a| m.max(a.abs()));
            // Sphere block: v_x . x = 0.
            let dot: f64 = v[..n + 1].iter().zip(&q0.x).map(|(a, b)| a * b).sum();
            assert!(
                dot.abs() <= 1e-6 * scale,
                "{}: sphere-normal component {dot:e}",
                f.label
            );
            // Isometry block: A^T dA + dA^T A = 0.
            let da = Matrix::from_vec(n, n, v[n + 1 + n..].to_vec()).unwrap();
            let sym = q0.a.transpose().matmul(&da);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((sym[(i, j)] + sym[(j, i)]).abs());
                }
            }
            assert!(
                worst <= 1e-6 * scale,
                "{}: rotation-tangency residual {worst:e}",
                f.label
            );
        }
        level = next;
    }
}

#[test]
fn flag_reports_stabilization_failure_when_capped() {
    // With max_step too small to stabilize, the error names the level.
    let pair = ManifoldPair::new(sphere(2, true), euclidean(2)).unwrap();
    let fields = rolling_fields(&pair, false).unwrap();
    let q0 = ConfigPoint::canonical(&pair);
    let p = pair.state_to_rep(&q0);
    let err = compute_flag(
        &fields,
        &p,
        2,
        config_dim(&pair, false).unwrap(),
        FlagOptions::default(),
    );
    assert!(matches!(
        err,
        Err(rollkit_core::CoreError::NoStabilization { max_step: 2, .. })
    ));
}
