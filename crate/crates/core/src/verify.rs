//! Built-in verification suite: every published number the library is
//! expected to reproduce, as one executable row per claim, with pinned
//! tolerances. The command-line `verify` subcommand renders these rows, and
//! the acceptance test target asserts them.

use crate::chart::{
    euclidean, se3, se3_flat, sphere, sphere_corrupted_gamma, FramedChart, SQRT2,
};
use crate::connection::{
    christoffel_numeric, fd_default_step, geodesic_residual, structural_constants_2d,
    SampledCurve,
};
use crate::error::Result;
use crate::flag::{controllability_report, lie_bracket_numeric, FlagOptions, VectorFieldHandle};
use crate::linalg::{bracket_terms, exp_skew, skew_basis, Matrix, SkewIndex};
use crate::num::{Jet, Scalar};
use crate::rolling::{
    coefficient_paths, config_dim, curve_length, extend_to_extrinsic, frame_coefficient_drift,
    integrate_rolling, noslip_residual, reconstruct_ambient_isometry, rolling_freedom,
    v_coefficients, verify_rolling_conditions, ConfigPoint, Control, ExtConfigPoint,
    ManifoldPair, RollingTrajectory, Stepper,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

/// One measured check inside a criterion.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub what: String,
    pub expected: String,
    pub observed: String,
    pub tolerance: String,
    pub pass: bool,
}

impl CheckLine {
    fn residual(what: impl Into<String>, observed: f64, tol: f64) -> Self {
        CheckLine {
            what: what.into(),
            expected: format!("<= {tol:e}"),
            observed: format!("{observed:.3e}"),
            tolerance: format!("{tol:e}"),
            pass: observed.is_finite() && observed <= tol,
        }
    }

    fn exceeds(what: impl Into<String>, observed: f64, floor: f64) -> Self {
        CheckLine {
            what: what.into(),
            expected: format!(">= {floor:e}"),
            observed: format!("{observed:.3e}"),
            tolerance: format!("{floor:e}"),
            pass: observed.is_finite() && observed >= floor,
        }
    }

    fn exact<T: PartialEq + std::fmt::Debug>(
        what: impl Into<String>,
        expected: T,
        observed: T,
    ) -> Self {
        CheckLine {
            what: what.into(),
            expected: format!("{expected:?}"),
            observed: format!("{observed:?}"),
            tolerance: "exact".into(),
            pass: expected == observed,
        }
    }

    fn budget(what: impl Into<String>, seconds: f64, budget: f64) -> Self {
        CheckLine {
            what: what.into(),
            expected: format!("< {budget} s"),
            observed: format!("{seconds:.2} s"),
            tolerance: format!("{budget} s"),
            pass: seconds < budget,
        }
    }
}

/// Outcome of one suite criterion.
#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub lines: Vec<CheckLine>,
}

/// Options for the verification run.
#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Substring filter on criterion id or name.
    pub filter: Option<String>,
    /// Seed for the randomized samplers (env `ROLLKIT_SEED`, default 0).
    pub seed: u64,
    /// Mutation hook: runs the suite against a sphere chart with negated
    /// connection coefficients; the suite must then fail.
    pub corrupt_sphere_gamma: bool,
}

struct Ctx {
    rng: ChaCha8Rng,
    corrupt: bool,
}

impl Ctx {
    fn sphere(&self, n: usize) -> FramedChart {
        if self.corrupt {
            sphere_corrupted_gamma(n)
        } else {
            sphere(n, true)
        }
    }

    fn sphere_point(&mut self, n: usize, margin: f64) -> Vec<f64> {
        loop {
            let mut x: Vec<f64> = (0..=n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-3 {
                continue;
            }
            for v in x.iter_mut() {
                *v /= norm;
            }
            x[n] = x[n].abs();
            if x[n] > margin {
                return x;
            }
        }
    }

    fn random_rotation(&mut self, n: usize) -> Matrix {
        let mut skew = Matrix::zeros(n, n);
        for idx in SkewIndex::all(n) {
            let v = self.rng.gen_range(-1.5..1.5);
            skew[(idx.i - 1, idx.j - 1)] = v;
            skew[(idx.j - 1, idx.i - 1)] = -v;
        }
        exp_skew(&skew).expect("skew exponential")
    }
}

type CriterionFn = fn(&mut Ctx) -> Result<Vec<CheckLine>>;

pub const CRITERIA: &[(&str, &str)] = &[
    ("C01", "flag-sphere-plane-2d"),
    ("C02", "flag-sphere-n"),
    ("C03", "flag-se3"),
    ("C04", "flag-equal-curvature"),
    ("C05", "christoffel-closed-vs-numeric"),
    ("C06", "sphere-derivative-identities"),
    ("C07", "se3-closed-form-rolling"),
    ("C08", "se3-extrinsic-reconstruction"),
    ("C09", "circle-examples"),
    ("C10", "invariant-suites"),
    ("C11", "rolling-freedom"),
    ("C12", "bracket-self-check"),
];

/// Runs the suite (optionally filtered) and returns one result per
/// criterion, in id order.
pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CriterionResult>> {
    let fns: &[CriterionFn] = &[
        c01_flag_sphere_plane_2d,
        c02_flag_sphere_n,
        c03_flag_se3,
        c04_flag_equal_curvature,
        c05_christoffel_closed_vs_numeric,
        c06_sphere_derivative_identities,
        c07_se3_closed_form_rolling,
        c08_se3_extrinsic_reconstruction,
        c09_circle_examples,
        c10_invariant_suites,
        c11_rolling_freedom,
        c12_bracket_self_check,
    ];
    let mut out = Vec::new();
    for ((id, name), f) in CRITERIA.iter().zip(fns) {
        if let Some(filter) = &opts.filter {
            if !id.contains(filter.as_str()) && !name.contains(filter.as_str()) {
                continue;
            }
        }
        let mut ctx = Ctx {
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            corrupt: opts.corrupt_sphere_gamma,
        };
        let start = Instant::now();
        let lines = f(&mut ctx)?;
        let seconds = start.elapsed().as_secs_f64();
        out.push(CriterionResult {
            id,
            name,
            pass: lines.iter().all(|l| l.pass),
            seconds,
            lines,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// C01 - 2-D sphere on plane: ranks [2, 3, 5] for 20 random configurations.
// ---------------------------------------------------------------------------

fn c01_flag_sphere_plane_2d(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let start = Instant::now();
    let pair = ManifoldPair::new(ctx.sphere(2), euclidean(2))?;
    let mut lines = Vec::new();
    let mut all_ranks_ok = true;
    let mut all_ctrl = true;
    let mut all_step = true;
    for _ in 0..20 {
        let x = ctx.sphere_point(2, 0.25);
        let x_hat = vec![
            ctx.rng.gen_range(-1.0..1.0),
            ctx.rng.gen_range(-1.0..1.0),
        ];
        let a = ctx.random_rotation(2);
        let q0 = ConfigPoint::new(&pair, x, x_hat, a)?;
        let report = controllability_report(&pair, &q0, 6, FlagOptions::default())?;
        all_ranks_ok &= report.ranks == vec![2, 3, 5];
        all_ctrl &= report.controllable;
        all_step &= report.step == 3;
    }
    lines.push(CheckLine::exact(
        "ranks [2,3,5] at 20 random configurations",
        true,
        all_ranks_ok,
    ));
    lines.push(CheckLine::exact("step 3", true, all_step));
    lines.push(CheckLine::exact("controllable", true, all_ctrl));
    lines.push(CheckLine::budget("runtime", start.elapsed().as_secs_f64(), 1.0));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C02 - spheres on flat space, n = 2, 3, 4: stabilized rank n(n+3)/2, step 3.
// ---------------------------------------------------------------------------

fn c02_flag_sphere_n(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let start = Instant::now();
    let mut lines = Vec::new();
    for n in [2usize, 3, 4] {
        let pair = ManifoldPair::new(ctx.sphere(n), euclidean(n))?;
        let q0 = ConfigPoint::canonical(&pair);
        let report = controllability_report(&pair, &q0, 6, FlagOptions::default())?;
        lines.push(CheckLine::exact(
            format!("n={n}: orbit dimension"),
            n * (n + 3) / 2,
            report.orbit_dim,
        ));
        lines.push(CheckLine::exact(format!("n={n}: step"), 3, report.step));
        lines.push(CheckLine::exact(
            format!("n={n}: controllable"),
            true,
            report.controllable,
        ));
    }
    lines.push(CheckLine::budget("runtime", start.elapsed().as_secs_f64(), 10.0));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C03 - rigid motions on their Lie algebra: ranks [6, 9, 12, 12] of 27.
// ---------------------------------------------------------------------------

fn c03_flag_se3(_ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let start = Instant::now();
    let pair = ManifoldPair::new(se3(), se3_flat())?;
    let q0 = ConfigPoint::canonical(&pair);
    let report = controllability_report(
        &pair,
        &q0,
        6,
        FlagOptions {
            fd_cross_check: true,
            ..Default::default()
        },
    )?;
    Ok(vec![
        CheckLine::exact("ranks", vec![6usize, 9, 12, 12], report.ranks.clone()),
        CheckLine::exact("orbit dimension", 12usize, report.orbit_dim),
        CheckLine::exact("configuration dimension", 27usize, report.config_dim),
        CheckLine::exact("controllable", false, report.controllable),
        CheckLine::budget("runtime", start.elapsed().as_secs_f64(), 10.0),
    ])
}

// ---------------------------------------------------------------------------
// C04 - equal-curvature degeneracy: stabilized rank 2.
// ---------------------------------------------------------------------------

fn c04_flag_equal_curvature(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let flat = ManifoldPair::new(euclidean(2), euclidean(2))?;
    let round = ManifoldPair::new(ctx.sphere(2), ctx.sphere(2))?;
    for (label, pair) in [("plane on plane", flat), ("sphere on identical sphere", round)] {
        let q0 = ConfigPoint::canonical(&pair);
        let report = controllability_report(&pair, &q0, 6, FlagOptions::default())?;
        lines.push(CheckLine::exact(
            format!("{label}: stabilized rank"),
            2usize,
            report.orbit_dim,
        ));
        lines.push(CheckLine::exact(format!("{label}: step"), 1usize, report.step));
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C05 - closed-form vs differenced connection coefficients.
// ---------------------------------------------------------------------------

fn c05_christoffel_closed_vs_numeric(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let start = Instant::now();
    let mut lines = Vec::new();
    for n in 2..=5 {
        let chart = ctx.sphere(n);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = ctx.sphere_point(n, 0.1);
            let closed = chart.gamma_closed(&x).expect("sphere closed form");
            let numeric = christoffel_numeric(&chart, &x)?;
            worst = worst.max(closed.max_abs_diff(&numeric));
        }
        lines.push(CheckLine::residual(
            format!("sphere({n}): max |closed - numeric| over 100 points"),
            worst,
            1e-6,
        ));
    }
    // Rigid motions through the 16-dimensional embedding.
    let chart = se3();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = ctx.random_rotation(3);
        let mut x = c.as_slice().to_vec();
        x.extend((0..3).map(|_| ctx.rng.gen_range(-1.0..1.0)));
        let closed = chart.gamma_closed(&x).expect("constant closed form");
        let numeric = christoffel_numeric(&chart, &x)?;
        worst = worst.max(closed.max_abs_diff(&numeric));
    }
    lines.push(CheckLine::residual(
        "rigid motions: max |closed - numeric| over 20 configurations",
        worst,
        1e-6,
    ));
    lines.push(CheckLine::budget("runtime", start.elapsed().as_secs_f64(), 5.0));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C06 - frame derivatives of the sphere coefficient functions match the
// three-case closed form.
// ---------------------------------------------------------------------------

fn c06_sphere_derivative_identities(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let n = 4usize;
    let chart = ctx.sphere(n);
    let coeff = |x: &[f64], l: usize| -> f64 {
        // x_{l-1} / sqrt(s_{l-1} s_l) in 0-based tail sums.
        let mut s = vec![0.0; n + 2];
        for k in (0..=n).rev() {
            s[k] = s[k + 1] + x[k] * x[k];
        }
        x[l] / (s[l] * s[l + 1]).sqrt()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = ctx.sphere_point(n, 0.15);
        let frame = chart.frame(&x)?;
        let mut s = vec![0.0; n + 2];
        for k in (0..=n).rev() {
            s[k] = s[k + 1] + x[k] * x[k];
        }
        let h = fd_default_step(1.0);
        for k in 0..n {
            for l in 0..n {
                let shift = |sign: f64| -> Vec<f64> {
                    chart.retract(
                        &x.iter()
                            .zip(&frame[k])
                            .map(|(v, d)| v + sign * h * d)
                            .collect::<Vec<f64>>(),
                    )
                };
                let fd = (coeff(&shift(1.0), l) - coeff(&shift(-1.0), l)) / (2.0 * h);
                // Closed form: 0 above the diagonal of directions, -1/s_k on
                // it, and the product form below.
                let expect = if k > l {
                    0.0
                } else if k == l {
                    -1.0 / s[k + 1]
                } else {
                    -x[k] * x[l] / (s[k] * s[k + 1] * s[l] * s[l + 1]).sqrt()
                };
                worst = worst.max((fd - expect).abs());
            }
        }
    }
    Ok(vec![CheckLine::residual(
        "max |differenced - closed| over 100 points, all index pairs",
        worst,
        1e-6,
    )])
}

// ---------------------------------------------------------------------------
// C07 - rigid-motion rolling reproduces the closed-form trajectory.
// ---------------------------------------------------------------------------

/// Closed-form final state of the worked rigid-motion rolling at parameter
/// t: still point (sqrt2 t, 0, 0, 0, 0, t), block-rotation isometry.
fn se3_expected(t: f64) -> (Vec<f64>, Matrix) {
    let x_hat = vec![SQRT2 * t, 0.0, 0.0, 0.0, 0.0, t];
    let mut a = Matrix::identity(6);
    let h = t / 2.0;
    a[(1, 1)] = h.cos();
    a[(1, 2)] = h.sin();
    a[(2, 1)] = -h.sin();
    a[(2, 2)] = h.cos();
    a[(3, 3)] = t.cos();
    a[(3, 4)] = t.sin();
    a[(4, 3)] = -t.sin();
    a[(4, 4)] = t.cos();
    (x_hat, a)
}

fn se3_example_control() -> Control {
    Control::constant(vec![SQRT2, 0.0, 0.0, 0.0, 0.0, 1.0])
}

fn c07_se3_closed_form_rolling(_ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let pair = ManifoldPair::new(se3(), se3_flat())?;
    let q0 = ConfigPoint::canonical(&pair);
    let (expect_xh, expect_a) = se3_expected(1.0);
    let mut lines = Vec::new();
    for (label, stepper, tol) in [
        ("RK4 at dt=1e-3", Stepper::Rk4, 1e-6),
        ("exact exponential stepping", Stepper::ExactExp, 1e-12),
    ] {
        let traj = integrate_rolling(&pair, &q0, &se3_example_control(), 1.0, 1e-3, stepper)?;
        let last = traj.last_state();
        let xh_err = last
            .x_hat
            .iter()
            .zip(&expect_xh)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let a_err = last.a.sub(&expect_a).max_abs();
        lines.push(CheckLine::residual(
            format!("{label}: still endpoint error"),
            xh_err,
            tol,
        ));
        lines.push(CheckLine::residual(
            format!("{label}: isometry error"),
            a_err,
            tol,
        ));
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C08 - ambient isometry reconstruction along the rigid-motion example.
// ---------------------------------------------------------------------------

/// Closed-form ambient isometry of the worked example at parameter theta,
/// in row-major 4x4 cell coordinates. The rotation-block cells mix in a
/// theta-rotation; one column pair turns at half rate on each side; the
/// remaining cells are fixed.
fn expected_ambient_isometry(theta: f64) -> (Matrix, Vec<f64>) {
    let idx = |i: usize, j: usize| 4 * i + j;
    let (c, s) = (theta.cos(), theta.sin());
    let h = theta / 2.0;
    let mut a = Matrix::zeros(16, 16);
    for &(i, j) in &[(0, 3), (1, 3), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)] {
        a[(idx(i, j), idx(i, j))] = 1.0;
    }
    let cells = [idx(0, 0), idx(0, 1), idx(1, 0), idx(1, 1)];
    let block = [
        [(1.0 + c) / 2.0, s / 2.0, -s / 2.0, (c - 1.0) / 2.0],
        [-s / 2.0, (1.0 + c) / 2.0, (1.0 - c) / 2.0, -s / 2.0],
        [s / 2.0, (1.0 - c) / 2.0, (1.0 + c) / 2.0, s / 2.0],
        [(c - 1.0) / 2.0, s / 2.0, -s / 2.0, (1.0 + c) / 2.0],
    ];
    for (r, row) in block.iter().enumerate() {
        for (q, v) in row.iter().enumerate() {
            a[(cells[r], cells[q])] = *v;
        }
    }
    // Third-column pair rotates at half rate.
    a[(idx(0, 2), idx(0, 2))] = h.cos();
    a[(idx(1, 2), idx(0, 2))] = h.sin();
    a[(idx(0, 2), idx(1, 2))] = -h.sin();
    a[(idx(1, 2), idx(1, 2))] = h.cos();
    // Third-row pair rotates oppositely at half rate.
    a[(idx(2, 0), idx(2, 0))] = h.cos();
    a[(idx(2, 1), idx(2, 0))] = -h.sin();
    a[(idx(2, 0), idx(2, 1))] = h.sin();
    a[(idx(2, 1), idx(2, 1))] = h.cos();
    // rbar = embedded still point minus Abar times embedded rolling point.
    let mut r = vec![0.0; 16];
    r[idx(0, 0)] = -1.0;
    r[idx(0, 1)] = theta;
    r[idx(1, 0)] = -theta;
    r[idx(1, 1)] = -1.0;
    r[idx(2, 2)] = -1.0;
    r[idx(3, 3)] = -1.0;
    (a, r)
}

fn c08_se3_extrinsic_reconstruction(_ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let pair = ManifoldPair::new(se3(), se3_flat())?;
    let q0 = ConfigPoint::canonical(&pair);
    let traj = integrate_rolling(&pair, &q0, &se3_example_control(), 1.0, 1e-3, Stepper::ExactExp)?;
    let ext = extend_to_extrinsic(&pair, &traj, &Matrix::identity(10))?;
    let bs = ext.b.as_ref().expect("extension present");
    let mut lines = Vec::new();
    for target in [0.0f64, 0.5, 1.0] {
        let i = ext
            .t
            .iter()
            .position(|&t| (t - target).abs() < 1e-9)
            .expect("grid node at target time");
        let state = ExtConfigPoint::new(&pair, ext.states[i].clone(), bs[i].clone())?;
        let (abar, rbar) = reconstruct_ambient_isometry(&pair, &state)?;
        let (expect_a, expect_r) = expected_ambient_isometry(target);
        lines.push(CheckLine::residual(
            format!("t={target}: ambient isometry error"),
            abar.sub(&expect_a).max_abs(),
            1e-6,
        ));
        let r_err = rbar
            .iter()
            .zip(&expect_r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        lines.push(CheckLine::residual(
            format!("t={target}: translation error"),
            r_err,
            1e-6,
        ));
        // Conditions of the embedded definition along the reconstruction:
        // tangency of mapped frames and positive orientation.
        let amb = pair.m.ambient()?;
        let amb_hat = pair.m_hat.ambient()?;
        let p = (amb.embedding)(&state.base.x);
        let p_hat = (amb_hat.embedding)(&state.base.x_hat);
        let normals_hat = (amb_hat.normal_frame)(&p_hat);
        let mut tangency: f64 = 0.0;
        for e in (amb.frame_ambient)(&p) {
            let image = abar.matvec(&e);
            for nrm in &normals_hat {
                let dot: f64 = image.iter().zip(nrm).map(|(a, b)| a * b).sum();
                tangency = tangency.max(dot.abs());
            }
        }
        lines.push(CheckLine::residual(
            format!("t={target}: tangency residual"),
            tangency,
            1e-6,
        ));
        lines.push(CheckLine::residual(
            format!("t={target}: |det - 1|"),
            (abar.determinant() - 1.0).abs(),
            1e-9,
        ));
    }
    // Ambient no-slip along the whole reconstruction: the embedded still
    // velocity equals the mapped embedded rolling velocity.
    let amb = pair.m.ambient()?;
    let amb_hat = pair.m_hat.ambient()?;
    let mut worst: f64 = 0.0;
    let stride = 100;
    for i in (stride..ext.t.len() - stride).step_by(stride) {
        let state = ExtConfigPoint::new(&pair, ext.states[i].clone(), bs[i].clone())?;
        let (abar, _) = reconstruct_ambient_isometry(&pair, &state)?;
        let dt = ext.t[i + 1] - ext.t[i - 1];
        let p_plus = (amb.embedding)(&ext.states[i + 1].x);
        let p_minus = (amb.embedding)(&ext.states[i - 1].x);
        let ph_plus = (amb_hat.embedding)(&ext.states[i + 1].x_hat);
        let ph_minus = (amb_hat.embedding)(&ext.states[i - 1].x_hat);
        let v: Vec<f64> = p_plus
            .iter()
            .zip(&p_minus)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let vh: Vec<f64> = ph_plus
            .iter()
            .zip(&ph_minus)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let mapped = abar.matvec(&v);
        let err = mapped
            .iter()
            .zip(&vh)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
    }
    lines.push(CheckLine::residual(
        "ambient no-slip along the reconstruction",
        worst,
        1e-6,
    ));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C09 - one-dimensional rolling examples: constant normal angle on the
// straight imbedding, closed-form twist rate on the spiral.
// ---------------------------------------------------------------------------

fn angle_matrix(theta: f64) -> Matrix {
    Matrix::from_rows(&[
        vec![theta.cos(), theta.sin()],
        vec![-theta.sin(), theta.cos()],
    ])
    .expect("2x2")
}

fn c09_circle_examples(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let full_turn = 2.0 * std::f64::consts::PI;
    // Straight imbedding: the normal angle never moves.
    let pair = ManifoldPair::new(crate::chart::circle_r3(), crate::chart::line_r3())?;
    let q0 = ConfigPoint::canonical(&pair);
    let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![1.0]), full_turn, 1e-3, Stepper::Rk4)?;
    let theta0 = ctx.rng.gen_range(-3.0..3.0);
    let ext = extend_to_extrinsic(&pair, &traj, &angle_matrix(theta0))?;
    let bs = ext.b.as_ref().expect("extension");
    let mut drift: f64 = 0.0;
    for b in bs {
        drift = drift.max(b.sub(&bs[0]).max_abs());
    }
    lines.push(CheckLine::residual(
        "straight imbedding: normal angle drift over a full revolution",
        drift,
        1e-8,
    ));
    // Spiral imbedding: theta(t) = theta0 + still_position / sqrt2.
    let pair = ManifoldPair::new(crate::chart::circle_r3(), crate::chart::spiral_r3())?;
    let q0 = ConfigPoint::canonical(&pair);
    let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![1.0]), full_turn, 1e-3, Stepper::Rk4)?;
    let theta0 = ctx.rng.gen_range(-3.0..3.0);
    let ext = extend_to_extrinsic(&pair, &traj, &angle_matrix(theta0))?;
    let bs = ext.b.as_ref().expect("extension");
    let mut worst: f64 = 0.0;
    for (i, b) in bs.iter().enumerate() {
        let expect = angle_matrix(theta0 + ext.states[i].x_hat[0] / SQRT2);
        worst = worst.max(b.sub(&expect).max_abs());
    }
    lines.push(CheckLine::residual(
        "spiral imbedding: angle law theta0 + track/sqrt2 over a full revolution",
        worst,
        1e-6,
    ));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C10 - invariant suites on every built-in scenario, plus corrupted
// fixtures that must fail loudly.
// ---------------------------------------------------------------------------

struct ScenarioRun {
    label: &'static str,
    pair: ManifoldPair,
    traj: RollingTrajectory,
    extendable: bool,
}

fn c10_invariant_suites(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let full_turn = 2.0 * std::f64::consts::PI;
    let mut runs = Vec::new();
    {
        let pair = ManifoldPair::new(ctx.sphere(2), euclidean(2))?;
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![0.7, 0.2]), 1.0, 1e-3, Stepper::Rk4)?;
        runs.push(ScenarioRun { label: "sphere_plane_2d", pair, traj, extendable: false });
    }
    {
        let pair = ManifoldPair::new(ctx.sphere(3), euclidean(3))?;
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![0.5, 0.3, -0.2]), 1.0, 1e-3, Stepper::Rk4)?;
        runs.push(ScenarioRun { label: "sphere_plane_n", pair, traj, extendable: false });
    }
    {
        let pair = ManifoldPair::new(se3(), se3_flat())?;
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &se3_example_control(), 1.0, 1e-3, Stepper::Rk4)?;
        runs.push(ScenarioRun { label: "se3_example", pair, traj, extendable: true });
    }
    {
        let pair = ManifoldPair::new(crate::chart::circle_r3(), crate::chart::line_r3())?;
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![1.0]), full_turn, 1e-3, Stepper::Rk4)?;
        runs.push(ScenarioRun { label: "circle_line", pair, traj, extendable: true });
    }
    {
        let pair = ManifoldPair::new(crate::chart::circle_r3(), crate::chart::spiral_r3())?;
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![1.0]), full_turn, 1e-3, Stepper::Rk4)?;
        runs.push(ScenarioRun { label: "circle_spiral", pair, traj, extendable: true });
    }

    for run in &runs {
        let report = verify_rolling_conditions(&run.pair, &run.traj)?;
        lines.push(CheckLine::residual(
            format!("{}: no-slip residual", run.label),
            report.noslip,
            1e-6,
        ));
        let drift = frame_coefficient_drift(&run.pair, &run.traj)?;
        lines.push(CheckLine::residual(
            format!("{}: frame coefficient drift", run.label),
            drift,
            1e-6,
        ));
        let len = curve_length(&run.traj.x_curve()?);
        let len_hat = curve_length(&run.traj.x_hat_curve()?);
        lines.push(CheckLine::residual(
            format!("{}: arc-length difference", run.label),
            (len - len_hat).abs(),
            1e-7,
        ));
        if run.extendable {
            let nu = run.pair.codim()?;
            let b0 = random_so(ctx, nu);
            let g = random_so(ctx, nu);
            let base = extend_to_extrinsic(&run.pair, &run.traj, &b0)?;
            let (_, pb) = coefficient_paths(&run.pair, &base)?;
            let pb = pb.expect("normal coefficients");
            // Translating the initial normal isometry on either side
            // translates the parallel coefficients the same way.
            let right = extend_to_extrinsic(&run.pair, &run.traj, &b0.matmul(&g))?;
            let (_, pr) = coefficient_paths(&run.pair, &right)?;
            let pr = pr.expect("normal coefficients");
            let left = extend_to_extrinsic(&run.pair, &run.traj, &g.matmul(&b0))?;
            let (_, pl) = coefficient_paths(&run.pair, &left)?;
            let pl = pl.expect("normal coefficients");
            let mut equivariance: f64 = 0.0;
            for i in 0..pb.len() {
                equivariance = equivariance.max(pr[i].sub(&pb[i].matmul(&g)).max_abs());
                equivariance = equivariance.max(pl[i].sub(&g.matmul(&pb[i])).max_abs());
            }
            lines.push(CheckLine::residual(
                format!("{}: normal-group equivariance", run.label),
                equivariance,
                1e-7,
            ));
            // Uniqueness up to the constant right factor fixed at t = 0.
            let factor = g.transpose(); // arbitrary constant
            let other = extend_to_extrinsic(&run.pair, &run.traj, &b0.matmul(&factor))?;
            let (_, po) = coefficient_paths(&run.pair, &other)?;
            let po = po.expect("normal coefficients");
            let mut uniq: f64 = 0.0;
            for i in 0..pb.len() {
                uniq = uniq.max(po[i].sub(&pb[i].matmul(&factor)).max_abs());
            }
            lines.push(CheckLine::residual(
                format!("{}: extension uniqueness up to a constant right factor", run.label),
                uniq,
                1e-7,
            ));
        }
    }

    // Geodesic corollary on two scenarios whose rolling projection is a
    // geodesic: still projection is a geodesic of the same speed.
    for (label, pair, control) in [
        (
            "sphere_plane_2d geodesic roll",
            ManifoldPair::new(ctx.sphere(2), euclidean(2))?,
            Control::constant(vec![1.0, 0.0]),
        ),
        (
            "se3_example geodesic roll",
            ManifoldPair::new(se3(), se3_flat())?,
            se3_example_control(),
        ),
    ] {
        let q0 = ConfigPoint::canonical(&pair);
        let traj = integrate_rolling(&pair, &q0, &control, 1.0, 1e-3, Stepper::Rk4)?;
        let res = geodesic_residual(&pair.m_hat, &traj.x_hat_curve()?)?;
        lines.push(CheckLine::residual(
            format!("{label}: still-side geodesic residual"),
            res,
            1e-6,
        ));
        let mut speed_err: f64 = 0.0;
        for (s, u) in traj.states.iter().zip(&traj.u) {
            let a: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let b: f64 = s.a.matvec(u).iter().map(|v| v * v).sum::<f64>().sqrt();
            speed_err = speed_err.max((a - b).abs());
        }
        lines.push(CheckLine::residual(
            format!("{label}: speed equality"),
            speed_err,
            1e-8,
        ));
    }

    // Corrupted fixtures must fail loudly.
    let pair = ManifoldPair::new(ctx.sphere(2), euclidean(2))?;
    let q0 = ConfigPoint::canonical(&pair);
    let traj = integrate_rolling(&pair, &q0, &Control::constant(vec![0.7, 0.2]), 1.0, 1e-3, Stepper::Rk4)?;
    let mut twisted = traj.clone();
    for (i, s) in twisted.states.iter_mut().enumerate() {
        let angle = 0.5 * twisted.t[i];
        let w = Matrix::from_rows(&[vec![0.0, angle], vec![-angle, 0.0]]).expect("2x2");
        s.a = s.a.matmul(&exp_skew(&w)?);
    }
    lines.push(CheckLine::exceeds(
        "twisted fixture: frame coefficient drift detected",
        frame_coefficient_drift(&pair, &twisted)?,
        0.1,
    ));
    let mut frozen = traj.clone();
    let x0 = frozen.states[0].x_hat.clone();
    for s in frozen.states.iter_mut() {
        s.x_hat = x0.clone();
    }
    lines.push(CheckLine::exceeds(
        "frozen-track fixture: no-slip violation detected",
        noslip_residual(&pair, &frozen)?,
        0.7,
    ));
    Ok(lines)
}

fn random_so(ctx: &mut Ctx, n: usize) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    if n == 1 {
        return Matrix::identity(1);
    }
    ctx.random_rotation(n)
}

// ---------------------------------------------------------------------------
// C11 - rolling freedom counts.
// ---------------------------------------------------------------------------

fn c11_rolling_freedom(_ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for n in 2..=6 {
        let chart = euclidean(n);
        let dir: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
        let curve = SampledCurve::from_fn(|t| dir.iter().map(|d| d * t).collect(), 0.0, 1.0, 200)?;
        lines.push(CheckLine::exact(
            format!("straight line in flat {n}-space"),
            n - 1,
            rolling_freedom(&chart, &curve)?,
        ));
    }
    let circle = SampledCurve::from_fn(
        |t| vec![t.cos(), t.sin()],
        0.0,
        2.0 * std::f64::consts::PI,
        400,
    )?;
    lines.push(CheckLine::exact(
        "planar circle",
        0usize,
        rolling_freedom(&euclidean(2), &circle)?,
    ));
    let line = SampledCurve::from_fn(
        |t| vec![SQRT2 * t, 0.0, 0.0, 0.0, 0.0, t],
        0.0,
        1.0,
        200,
    )?;
    lines.push(CheckLine::exact(
        "rigid-motion example track in flat 6-space",
        5usize,
        rolling_freedom(&euclidean(6), &line)?,
    ));
    Ok(lines)
}

// ---------------------------------------------------------------------------
// C12 - bracket machinery self-check against the algebraic table and the
// classical two-dimensional field form.
// ---------------------------------------------------------------------------

fn left_invariant_field(n: usize, idx: SkewIndex) -> VectorFieldHandle {
    fn eval<R: Scalar>(n: usize, wi: usize, wj: usize, p: &[R]) -> Vec<R> {
        let mut out = vec![R::zero(); n * n];
        for r in 0..n {
            out[r * n + wj] = p[r * n + wi].clone();
            out[r * n + wi] = -p[r * n + wj].clone();
        }
        out
    }
    let (i, j) = (idx.i - 1, idx.j - 1);
    VectorFieldHandle::new(
        format!("W{}{}", idx.i, idx.j),
        Arc::new(move |p: &[f64]| eval::<f64>(n, i, j, p)),
    )
    .with_jets(Arc::new(move |p: &[Jet]| eval::<Jet>(n, i, j, p)))
}

fn c12_bracket_self_check(ctx: &mut Ctx) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    // Differenced brackets of the left-invariant rotation fields against
    // the algebraic table, n <= 6, at the identity.
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        let idxs = SkewIndex::all(n);
        for &a in &idxs {
            for &b in &idxs {
                let fa = left_invariant_field(n, a);
                let fb = left_invariant_field(n, b);
                let got = lie_bracket_numeric(&fa, &fb, &p, 1e-5)?;
                let mut expect = Matrix::zeros(n, n);
                for (sign, idx) in bracket_terms(a, b) {
                    expect = expect.add(&skew_basis(n, idx)?.scale(sign));
                }
                for r in 0..n {
                    for c in 0..n {
                        worst = worst.max((got[r * n + c] - expect[(r, c)]).abs());
                    }
                }
            }
        }
    }
    lines.push(CheckLine::residual(
        "differenced rotation-field brackets vs algebraic table (n <= 6)",
        worst,
        1e-7,
    ));
    // Two-dimensional rolling fields carry the classical rotation-rate
    // combination of the structural constants of both sides.
    let m = ctx.sphere(2);
    let mh = sphere(2, true);
    let pair = ManifoldPair::new(m, mh)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = ctx.sphere_point(2, 0.3);
        let x_hat = ctx.sphere_point(2, 0.3);
        let theta: f64 = ctx.rng.gen_range(-3.0..3.0);
        let a = Matrix::from_rows(&[
            vec![theta.cos(), -theta.sin()],
            vec![theta.sin(), theta.cos()],
        ])?;
        let q = ConfigPoint::new(&pair, x.clone(), x_hat.clone(), a)?;
        let (c1, c2) = structural_constants_2d(&pair.m, &x)?;
        let (ch1, ch2) = structural_constants_2d(&pair.m_hat, &x_hat)?;
        let om1 = v_coefficients(&pair, &q, 0)?;
        let om2 = v_coefficients(&pair, &q, 1)?;
        worst = worst
            .max((-om1[(0, 1)] - (-c1 + ch1 * theta.cos() + ch2 * theta.sin())).abs());
        worst = worst
            .max((-om2[(0, 1)] - (-c2 - ch1 * theta.sin() + ch2 * theta.cos())).abs());
    }
    lines.push(CheckLine::residual(
        "two-dimensional field rotation rates vs structural-constant form",
        worst,
        1e-7,
    ));
    // Sanity: the configuration dimension formula for the rolled pairs.
    lines.push(CheckLine::exact(
        "configuration dimension of the 2-D pair",
        5usize,
        config_dim(&pair, false)?,
    ));
    Ok(lines)
}
