//! Numerical Lie brackets of vector-field handles, the flag
//! `D^{i+1} = D + [D, D^i]`, rank sequence, step detection, and the
//! controllability verdict.
//!
//! Bracket values feed rank decisions, so deep brackets are evaluated by
//! differentiating through the field formulas with nested jets (exact to
//! roundoff). Plain central differences remain available: as the public
//! [`lie_bracket_numeric`] operation, as the fallback for handles without a
//! jet evaluator, and as an independent cross-check of the first two flag
//! levels (disagreement is reported as rank-unstable, never averaged away).

use crate::error::{CoreError, Result};
use crate::linalg::{rank_of_span, RankPolicy};
use crate::num::{directional_derivative, Jet, Scalar};
use crate::rolling::ManifoldPair;
use serde::Serialize;
use std::sync::Arc;

type EvalF64 = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type EvalJet = Arc<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>;

/// A vector field on a representation space: a pure evaluation map plus a
/// provenance label. Closed under bracketing.
#[derive(Clone)]
pub struct VectorFieldHandle {
    pub label: String,
    /// Bracket nesting depth (generators have depth 0).
    pub depth: usize,
    eval_f64: EvalF64,
    eval_jet: Option<EvalJet>,
}

impl VectorFieldHandle {
    pub fn new(label: impl Into<String>, eval: EvalF64) -> Self {
        VectorFieldHandle {
            label: label.into(),
            depth: 0,
            eval_f64: eval,
            eval_jet: None,
        }
    }

    pub fn with_jets(mut self, eval: EvalJet) -> Self {
        self.eval_jet = Some(eval);
        self
    }

    pub fn has_jets(&self) -> bool {
        self.eval_jet.is_some()
    }

    /// Plain evaluation. For bracket handles without jet support this runs
    /// nested finite differences with a depth-scaled step.
    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        (self.eval_f64)(p)
    }

    /// Evaluation through the jet engine when available (exact derivatives
    /// inside bracket expressions), otherwise the plain path.
    pub fn eval_exact(&self, p: &[f64]) -> Vec<f64> {
        match &self.eval_jet {
            Some(f) => {
                let jp: Vec<Jet> = p.iter().map(|&v| Jet::constant(v)).collect();
                f(&jp).into_iter().map(|j| j.value()).collect()
            }
            None => self.eval(p),
        }
    }

    pub fn eval_jets(&self, p: &[Jet]) -> Option<Vec<Jet>> {
        self.eval_jet.as_ref().map(|f| f(p))
    }

    /// The bracket `[a, b]` as a new handle.
    pub fn bracket(a: &VectorFieldHandle, b: &VectorFieldHandle) -> VectorFieldHandle {
        let label = format!("[{},{}]", a.label, b.label);
        let depth = a.depth.max(b.depth) + 1;
        let jet = match (a.eval_jet.clone(), b.eval_jet.clone()) {
            (Some(fa), Some(fb)) => {
                let (fa2, fb2) = (fa.clone(), fb.clone());
                let closure: EvalJet = Arc::new(move |p: &[Jet]| {
                    let va = fa2(p);
                    let vb = fb2(p);
                    let fa3 = fa2.clone();
                    let fb3 = fb2.clone();
                    let d_b_along_a = directional_derivative(move |q| fb3(q), p, &va);
                    let d_a_along_b = directional_derivative(move |q| fa3(q), p, &vb);
                    d_b_along_a
                        .iter()
                        .zip(&d_a_along_b)
                        .map(|(x, y)| x - y)
                        .collect()
                });
                Some(closure)
            }
            _ => None,
        };
        let (af, bf) = (a.clone(), b.clone());
        let f64_closure: EvalF64 = match &jet {
            Some(j) => {
                let j = j.clone();
                Arc::new(move |p: &[f64]| {
                    let jp: Vec<Jet> = p.iter().map(|&v| Jet::constant(v)).collect();
                    j(&jp).into_iter().map(|x| x.value()).collect()
                })
            }
            None => Arc::new(move |p: &[f64]| {
                fd_bracket(&af, &bf, p, fd_step_for_depth(depth, p))
            }),
        };
        VectorFieldHandle {
            label,
            depth,
            eval_f64: f64_closure,
            eval_jet: jet,
        }
    }
}

fn point_scale(p: &[f64]) -> f64 {
    1.0 + p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Steps for nested finite differences grow with depth: the inner
/// evaluations carry roundoff of order eps/h^(d-1), so the outer step must
/// back off to keep the quotient bounded.
fn fd_step_for_depth(depth: usize, p: &[f64]) -> f64 {
    let base = match depth {
        0 | 1 => 1e-5,
        2 => 3e-4,
        3 => 5e-3,
        _ => 3e-2,
    };
    base * point_scale(p)
}

fn fd_jacobian_apply(f: &VectorFieldHandle, p: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    // J_f(p) v by a central difference along v.
    let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if vnorm == 0.0 {
        return vec![0.0; p.len()];
    }
    let s = h / vnorm;
    let plus: Vec<f64> = p.iter().zip(v).map(|(a, d)| a + s * d).collect();
    let minus: Vec<f64> = p.iter().zip(v).map(|(a, d)| a - s * d).collect();
    let fp = f.eval(&plus);
    let fm = f.eval(&minus);
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * s)).collect()
}

fn fd_bracket(a: &VectorFieldHandle, b: &VectorFieldHandle, p: &[f64], h: f64) -> Vec<f64> {
    let va = a.eval(p);
    let vb = b.eval(p);
    let jb_va = fd_jacobian_apply(b, p, &va, h);
    let ja_vb = fd_jacobian_apply(a, p, &vb, h);
    jb_va.iter().zip(&ja_vb).map(|(x, y)| x - y).collect()
}

/// `[X, Y](p) = J_Y(p) X(p) - J_X(p) Y(p)` with Jacobian-vector products by
/// central differences of step `h * (1 + |p|)`; error `O(h^2)`.
pub fn lie_bracket_numeric(
    x: &VectorFieldHandle,
    y: &VectorFieldHandle,
    p: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(CoreError::BadInput("bracket step must be positive".into()));
    }
    let step = h * point_scale(p);
    Ok(fd_bracket(x, y, p, step))
}

/// Rank sequence of the flag with step detection and verdict.
#[derive(Clone, Debug, Serialize)]
pub struct FlagReport {
    pub ranks: Vec<usize>,
    pub step: usize,
    pub config_dim: usize,
    pub orbit_dim: usize,
    pub controllable: bool,
    pub provenance: Vec<Vec<String>>,
}

/// Knobs for flag computation.
#[derive(Clone, Copy, Debug)]
pub struct FlagOptions {
    /// Finite-difference step for the cross-check and for handles without
    /// jet evaluators.
    pub h: f64,
    /// Second step of the stability cross-check.
    pub h_alt: f64,
    pub rank: RankPolicy,
    /// Verify the first two levels against plain finite differences at both
    /// steps; any disagreement in ranks is an error, never averaged away.
    pub fd_cross_check: bool,
}

impl Default for FlagOptions {
    fn default() -> Self {
        FlagOptions {
            h: 1e-5,
            h_alt: 1e-4,
            rank: RankPolicy::default(),
            fd_cross_check: false,
        }
    }
}

/// Builds the flag `D^1 = D`, `D^{i+1} = D + [D, D^i]` at `p`: each level
/// brackets the generators against the fields added at the previous level,
/// accumulates values, and measures ranks. Stops at stabilization or when
/// the span fills the configuration dimension.
pub fn compute_flag(
    generators: &[VectorFieldHandle],
    p: &[f64],
    max_step: usize,
    config_dim: usize,
    opts: FlagOptions,
) -> Result<FlagReport> {
    if generators.is_empty() {
        return Err(CoreError::BadInput("flag needs at least one generator".into()));
    }
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut provenance: Vec<Vec<String>> = Vec::new();
    let mut ranks: Vec<usize> = Vec::new();

    let mut level_fields: Vec<VectorFieldHandle> = generators.to_vec();
    let mut labels: Vec<String> = level_fields.iter().map(|f| f.label.clone()).collect();
    labels.sort();
    provenance.push(labels);
    for f in &level_fields {
        values.push(f.eval_exact(p));
    }
    ranks.push(rank_of_span(&values, opts.rank)?);

    let mut step = if ranks[0] == config_dim { Some(1) } else { None };
    while step.is_none() {
        let level = ranks.len() + 1;
        if level > max_step {
            return Err(CoreError::NoStabilization {
                max_step,
                ranks,
            });
        }
        let mut new_fields = Vec::new();
        for g in generators {
            for f in &level_fields {
                if g.label == f.label {
                    continue;
                }
                new_fields.push(VectorFieldHandle::bracket(g, f));
            }
        }
        let mut labels: Vec<String> = new_fields.iter().map(|f| f.label.clone()).collect();
        labels.sort();
        provenance.push(labels);
        for f in &new_fields {
            values.push(f.eval_exact(p));
        }
        let rank = rank_of_span(&values, opts.rank)?;
        let prev = *ranks.last().unwrap();
        ranks.push(rank);
        if rank == prev {
            step = Some(level - 1);
        } else if rank == config_dim {
            step = Some(level);
        }
        level_fields = new_fields;
    }

    if opts.fd_cross_check {
        cross_check_shallow_ranks(generators, p, &ranks, opts)?;
    }

    let orbit_dim = *ranks.last().unwrap();
    Ok(FlagReport {
        step: step.unwrap(),
        controllable: orbit_dim == config_dim,
        orbit_dim,
        config_dim,
        ranks,
        provenance,
    })
}

/// Recomputes the first two flag levels with plain central differences at
/// two steps and demands integer agreement with the exact ranks.
fn cross_check_shallow_ranks(
    generators: &[VectorFieldHandle],
    p: &[f64],
    ranks: &[usize],
    opts: FlagOptions,
) -> Result<()> {
    let mut per_step_ranks: Vec<Vec<usize>> = Vec::new();
    for &h in &[opts.h, opts.h_alt] {
        let mut values: Vec<Vec<f64>> = generators.iter().map(|g| g.eval(p)).collect();
        let r1 = rank_of_span(&values, opts.rank)?;
        let mut got = vec![r1];
        if ranks.len() >= 2 {
            for g in generators {
                for f in generators {
                    if g.label == f.label {
                        continue;
                    }
                    values.push(lie_bracket_numeric(g, f, p, h)?);
                }
            }
            got.push(rank_of_span(&values, opts.rank)?);
        }
        per_step_ranks.push(got);
    }
    let want: Vec<usize> = ranks.iter().take(2).copied().collect();
    for (got, h) in per_step_ranks.iter().zip([opts.h, opts.h_alt]) {
        if got != &want {
            return Err(CoreError::RankUnstable {
                a: want,
                b: got.clone(),
                ha: opts.h,
                hb: h,
            });
        }
    }
    Ok(())
}

/// Flag ranks of the rolling distribution of a pair at a configuration; the
/// stabilized rank is the orbit dimension.
pub fn controllability_report(
    pair: &ManifoldPair,
    q0: &crate::rolling::ConfigPoint,
    max_step: usize,
    opts: FlagOptions,
) -> Result<FlagReport> {
    q0.validate(pair)?;
    let generators = crate::rolling::rolling_fields(pair, false)?;
    let p = pair.state_to_rep(q0);
    compute_flag(
        &generators,
        &p,
        max_step,
        crate::rolling::config_dim(pair, false)?,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{skew_basis, SkewIndex};
    use crate::num::Scalar;
    use approx::assert_relative_eq;

    /// Left-invariant field A -> A * W on the n x n representation space.
    fn left_invariant_field(n: usize, idx: SkewIndex) -> VectorFieldHandle {
        fn eval<R: Scalar>(n: usize, wi: usize, wj: usize, p: &[R]) -> Vec<R> {
            // (A W)_{rc} with W = E_{wi,wj} - E_{wj,wi}.
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

    fn identity_rep(n: usize) -> Vec<f64> {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        p
    }

    #[test]
    fn numeric_brackets_reproduce_commutator_table() {
        // Numerical brackets of the left-invariant fields at the identity
        // match the algebraic table for n <= 6, within 1e-7.
        for n in 2..=6 {
            let idxs = SkewIndex::all(n);
            let p = identity_rep(n);
            for &a in &idxs {
                for &b in &idxs {
                    let fa = left_invariant_field(n, a);
                    let fb = left_invariant_field(n, b);
                    let got = lie_bracket_numeric(&fa, &fb, &p, 1e-5).unwrap();
                    let mut expect = crate::linalg::Matrix::zeros(n, n);
                    for (sign, idx) in crate::linalg::bracket_terms(a, b) {
                        expect = expect.add(&skew_basis(n, idx).unwrap().scale(sign));
                    }
                    for r in 0..n {
                        for c in 0..n {
                            assert!(
                                (got[r * n + c] - expect[(r, c)]).abs() <= 1e-7,
                                "n={n} [{a:?},{b:?}] entry ({r},{c})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bracket_antisymmetry_and_constant_fields() {
        let n = 4;
        let p = identity_rep(n);
        let fa = left_invariant_field(n, SkewIndex::new(1, 2).unwrap());
        let fb = left_invariant_field(n, SkewIndex::new(2, 4).unwrap());
        let ab = lie_bracket_numeric(&fa, &fb, &p, 1e-5).unwrap();
        let ba = lie_bracket_numeric(&fb, &fa, &p, 1e-5).unwrap();
        let scale = ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x + y).abs() <= 1e-9 * scale.max(1.0));
        }
        // Coordinate (constant) fields commute.
        let c1 = VectorFieldHandle::new("d1", Arc::new(|p: &[f64]| {
            let mut v = vec![0.0; p.len()];
            v[0] = 1.0;
            v
        }));
        let c2 = VectorFieldHandle::new("d2", Arc::new(|p: &[f64]| {
            let mut v = vec![0.0; p.len()];
            v[1] = 1.0;
            v
        }));
        let z = lie_bracket_numeric(&c1, &c2, &[0.3, 0.4, 0.5], 1e-5).unwrap();
        assert!(z.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn flag_of_first_row_generators_fills_the_algebra() {
        // Generators {W_1j} bracket-generate all of so(n): the flag reaches
        // rank n(n-1)/2. Cross-validated against a brute-force span closure
        // over the algebraic table.
        for n in [3usize, 4, 5, 6] {
            let full = n * (n - 1) / 2;
            // Brute-force closure over the table, in basis-coefficient space.
            let idxs = SkewIndex::all(n);
            let pos = |idx: SkewIndex| idxs.iter().position(|&x| x == idx).unwrap();
            let gens: Vec<SkewIndex> = (2..=n).map(|j| SkewIndex::new(1, j).unwrap()).collect();
            let mut span: Vec<Vec<f64>> = gens
                .iter()
                .map(|&g| {
                    let mut v = vec![0.0; idxs.len()];
                    v[pos(g)] = 1.0;
                    v
                })
                .collect();
            loop {
                let mut grew = false;
                let current = span.clone();
                for &g in &gens {
                    for w in &current {
                        let mut bracket = vec![0.0; idxs.len()];
                        for (ci, &coef) in w.iter().enumerate() {
                            if coef == 0.0 {
                                continue;
                            }
                            for (sign, idx) in crate::linalg::bracket_terms(g, idxs[ci]) {
                                bracket[pos(idx)] += sign * coef;
                            }
                        }
                        let before = crate::linalg::rank_of_span(&span, RankPolicy::default())
                            .unwrap();
                        let mut trial = span.clone();
                        trial.push(bracket);
                        let after =
                            crate::linalg::rank_of_span(&trial, RankPolicy::default()).unwrap();
                        if after > before {
                            span = trial;
                            grew = true;
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            let closure_rank = crate::linalg::rank_of_span(&span, RankPolicy::default()).unwrap();
            assert_eq!(closure_rank, full, "table closure for n={n}");

            // Numerical flag of the corresponding fields at the identity.
            let generators: Vec<VectorFieldHandle> =
                gens.iter().map(|&g| left_invariant_field(n, g)).collect();
            let report = compute_flag(
                &generators,
                &identity_rep(n),
                6,
                full,
                FlagOptions { fd_cross_check: true, ..Default::default() },
            )
            .unwrap();
            assert_eq!(report.orbit_dim, full);
            assert_eq!(report.ranks[0], n - 1);
            assert!(report.controllable);
        }
    }

    #[test]
    fn jet_and_fd_brackets_agree_on_depth_two() {
        // [W12, [W12, W13]] evaluated exactly and by nested differences.
        let n = 3;
        let p = identity_rep(n);
        let a = left_invariant_field(n, SkewIndex::new(1, 2).unwrap());
        let b = left_invariant_field(n, SkewIndex::new(1, 3).unwrap());
        let inner = VectorFieldHandle::bracket(&a, &b);
        let outer = VectorFieldHandle::bracket(&a, &inner);
        let exact = outer.eval_exact(&p);
        // Strip jets to force the FD fallback.
        let a_fd = VectorFieldHandle::new("a", Arc::new({
            let a = a.clone();
            move |p: &[f64]| a.eval(p)
        }));
        let b_fd = VectorFieldHandle::new("b", Arc::new({
            let b = b.clone();
            move |p: &[f64]| b.eval(p)
        }));
        let outer_fd = VectorFieldHandle::bracket(&a_fd, &VectorFieldHandle::bracket(&a_fd, &b_fd));
        let approx = outer_fd.eval(&p);
        for (x, y) in exact.iter().zip(&approx) {
            assert_relative_eq!(x, y, epsilon = 1e-5);
        }
        // And the exact value matches the algebra: [W12,[W12,W13]] = [W12, -W23] = W13...
        // check against table expansion.
        let mut expect = crate::linalg::Matrix::zeros(n, n);
        for (s1, idx1) in crate::linalg::bracket_terms(
            SkewIndex::new(1, 2).unwrap(),
            SkewIndex::new(1, 3).unwrap(),
        ) {
            for (s2, idx2) in crate::linalg::bracket_terms(SkewIndex::new(1, 2).unwrap(), idx1) {
                expect = expect.add(&skew_basis(n, idx2).unwrap().scale(s1 * s2));
            }
        }
        for r in 0..n {
            for c in 0..n {
                assert_relative_eq!(exact[r * n + c], expect[(r, c)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unstable_fd_step_is_reported() {
        // At a generic rotation the evaluations round, so an absurdly small
        // difference step drowns the brackets in quotient noise. With the
        // full generator set the true flag stagnates at rank 3, leaving the
        // noisy bracket values room to inflate it; the cross-check must
        // flag the mismatch.
        let n = 3;
        let gens: Vec<VectorFieldHandle> = SkewIndex::all(n)
            .into_iter()
            .map(|idx| left_invariant_field(n, idx))
            .collect();
        let mut skew = crate::linalg::Matrix::zeros(n, n);
        skew[(0, 1)] = 0.7;
        skew[(1, 0)] = -0.7;
        skew[(1, 2)] = -0.4;
        skew[(2, 1)] = 0.4;
        let p = crate::linalg::exp_skew(&skew).unwrap().as_slice().to_vec();
        // config_dim larger than the stagnating rank, so level 2 is formed.
        let err = compute_flag(
            &gens,
            &p,
            6,
            6,
            FlagOptions {
                h: 1e-13,
                h_alt: 1e-5,
                fd_cross_check: true,
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(CoreError::RankUnstable { .. })));
    }
}

#[cfg(test)]
mod rolling_flag_tests {
    use super::*;
    use crate::chart::{euclidean, se3, se3_flat, sphere};
    use crate::rolling::{config_dim, ConfigPoint, ManifoldPair};

    #[test]
    fn sphere_on_plane_flag_is_two_three_five() {
        let pair = ManifoldPair::new(sphere(2, true), euclidean(2)).unwrap();
        let q0 = ConfigPoint::canonical(&pair);
        let report = controllability_report(&pair, &q0, 6, FlagOptions {
            fd_cross_check: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.ranks, vec![2, 3, 5]);
        assert_eq!(report.step, 3);
        assert_eq!(report.config_dim, 5);
        assert!(report.controllable);
    }

    #[test]
    fn sphere_on_plane_flags_for_higher_dimensions() {
        for n in [3usize, 4] {
            let pair = ManifoldPair::new(sphere(n, true), euclidean(n)).unwrap();
            let q0 = ConfigPoint::canonical(&pair);
            let report =
                controllability_report(&pair, &q0, 6, FlagOptions::default()).unwrap();
            assert_eq!(report.orbit_dim, n * (n + 3) / 2);
            assert_eq!(report.step, 3);
            assert!(report.controllable);
            assert_eq!(report.ranks[0], n);
            assert_eq!(report.ranks[1], n + n * (n - 1) / 2);
        }
    }

    #[test]
    fn se3_flag_stabilizes_at_twelve_of_twenty_seven() {
        let start = std::time::Instant::now();
        let pair = ManifoldPair::new(se3(), se3_flat()).unwrap();
        let q0 = ConfigPoint::canonical(&pair);
        let report = controllability_report(&pair, &q0, 6, FlagOptions {
            fd_cross_check: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.ranks, vec![6, 9, 12, 12]);
        assert_eq!(report.step, 3);
        assert_eq!(report.orbit_dim, 12);
        assert_eq!(report.config_dim, 27);
        assert!(!report.controllable);
        println!("se3 flag took {:?}", start.elapsed());
    }

    #[test]
    fn sphere_rolling_bracket_identity() {
        // For the sphere rolling on flat space, the bracket of two
        // distribution generators corrects to a pure rotation direction:
        // [X_l, X_k] + (x_{l-1}/sqrt(s_{l-1} s_l)) X_k evaluates to the
        // left-translated skew basis element W_lk on the isometry block
        // and to zero on both point blocks.
        use crate::linalg::{skew_basis, SkewIndex};
        let n = 3usize;
        let pair = ManifoldPair::new(sphere(n, true), euclidean(n)).unwrap();
        let fields = crate::rolling::rolling_fields(&pair, false).unwrap();
        let mut q0 = ConfigPoint::canonical(&pair);
        q0.x = pair.m.retract(&[0.3, -0.5, 0.2, 0.81]);
        q0.x_hat = vec![0.4, -1.0, 0.2];
        let p = pair.state_to_rep(&q0);
        let mut s = vec![0.0; n + 2];
        for k in (0..=n).rev() {
            s[k] = s[k + 1] + q0.x[k] * q0.x[k];
        }
        for l in 0..n {
            for k in (l + 1)..n {
                let bracket = lie_bracket_numeric(&fields[l], &fields[k], &p, 1e-5).unwrap();
                let coeff = q0.x[l] / (s[l] * s[l + 1]).sqrt();
                let xk = fields[k].eval(&p);
                let corrected: Vec<f64> = bracket
                    .iter()
                    .zip(&xk)
                    .map(|(b, f)| b + coeff * f)
                    .collect();
                // Point blocks vanish.
                let off = pair.m.m + pair.m_hat.m;
                assert!(corrected[..off].iter().all(|v| v.abs() <= 1e-6));
                // Isometry block equals A W_{(l+1)(k+1)}.
                let w = skew_basis(n, SkewIndex::new(l + 1, k + 1).unwrap()).unwrap();
                let aw = q0.a.matmul(&w);
                for i in 0..n {
                    for j in 0..n {
                        assert!(
                            (corrected[off + i * n + j] - aw[(i, j)]).abs() <= 1e-6,
                            "entry ({i},{j}) for pair ({l},{k})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn equal_geometry_pairs_stay_rank_two() {
        for pair in [
            ManifoldPair::new(euclidean(2), euclidean(2)).unwrap(),
            ManifoldPair::new(sphere(2, true), sphere(2, true)).unwrap(),
        ] {
            let q0 = ConfigPoint::canonical(&pair);
            let report =
                controllability_report(&pair, &q0, 6, FlagOptions::default()).unwrap();
            assert_eq!(report.ranks, vec![2, 2]);
            assert_eq!(report.step, 1);
            assert_eq!(report.orbit_dim, 2);
            assert!(!report.controllable);
            assert_eq!(config_dim(&pair, false).unwrap(), 5);
        }
    }
}
