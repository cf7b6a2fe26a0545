//! Connection coefficients, parallel and normal-parallel transport,
//! geodesics, and the two-dimensional structural constants.
//!
//! Coefficients come either from a chart's closed form or from central
//! differences of the ambient frame fields; transports integrate the
//! coefficient-space equation `zdot_i = -sum_{k,j} u_k Gamma(k,j,i) z_j`
//! with classical RK4 along the curve.

use crate::chart::{Christoffel, ChristoffelTensor, FramedChart};
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;

/// Central-difference step: (machine epsilon)^(1/3) times a point scale.
pub fn fd_default_step(scale: f64) -> f64 {
    const CBRT_EPS: f64 = 6.055454452393343e-6;
    CBRT_EPS * (1.0 + scale)
}

/// Options for numerical differentiation of frame fields.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdOptions {
    /// Explicit step; default is scale-aware (machine eps)^(1/3).
    pub step: Option<f64>,
    /// One level of Richardson extrapolation (h and h/2).
    pub richardson: bool,
}

/// Connection coefficients at `x`: the chart's closed form when present,
/// otherwise finite differences through the embedding.
pub fn christoffel(chart: &FramedChart, x: &[f64]) -> Result<ChristoffelTensor> {
    chart.check_domain(x)?;
    match chart.gamma_closed(x) {
        Some(g) => Ok(g),
        None => christoffel_numeric(chart, x),
    }
}

/// Tangential connection coefficients by central differences of the ambient
/// tangent frame: `Gamma(k,j,i) = <D_{e_k} e_j, e_i>`.
pub fn christoffel_numeric(chart: &FramedChart, x: &[f64]) -> Result<ChristoffelTensor> {
    christoffel_numeric_with(chart, x, FdOptions::default())
}

pub fn christoffel_numeric_with(
    chart: &FramedChart,
    x: &[f64],
    opts: FdOptions,
) -> Result<ChristoffelTensor> {
    chart.check_domain(x)?;
    christoffel_numeric_raw_with(chart, x, opts)
}

/// As [`christoffel_numeric`] but without the domain check: field formulas
/// extend smoothly off the constraint set, and integrator substeps sit
/// slightly off it.
pub(crate) fn christoffel_numeric_raw(
    chart: &FramedChart,
    x: &[f64],
) -> Result<ChristoffelTensor> {
    christoffel_numeric_raw_with(chart, x, FdOptions::default())
}

fn christoffel_numeric_raw_with(
    chart: &FramedChart,
    x: &[f64],
    opts: FdOptions,
) -> Result<ChristoffelTensor> {
    let amb = chart.ambient()?;
    let p = (amb.embedding)(x);
    let tangent = (amb.frame_ambient)(&p);
    differenced_gamma(&p, &tangent, &tangent, &amb.frame_ambient, opts)
}

/// Normal connection coefficients `Gamma(k,lambda,kappa) =
/// <D^perp_{e_k} eps_lambda, eps_kappa>` by central differences of the
/// normal frame fields.
pub fn normal_christoffel(chart: &FramedChart, x: &[f64]) -> Result<ChristoffelTensor> {
    normal_christoffel_with(chart, x, FdOptions::default())
}

pub fn normal_christoffel_with(
    chart: &FramedChart,
    x: &[f64],
    opts: FdOptions,
) -> Result<ChristoffelTensor> {
    chart.check_domain(x)?;
    let amb = chart.ambient()?;
    let p = (amb.embedding)(x);
    let tangent = (amb.frame_ambient)(&p);
    let normal = (amb.normal_frame)(&p);
    differenced_gamma(&p, &tangent, &normal, &amb.normal_frame, opts)
}

fn differenced_gamma(
    p: &[f64],
    directions: &[Vec<f64>],
    projectors: &[Vec<f64>],
    field: &(dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync),
    opts: FdOptions,
) -> Result<ChristoffelTensor> {
    let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = opts.step.unwrap_or_else(|| fd_default_step(scale));
    let dirs = directions.len();
    let dim = projectors.len();
    let mut g = Christoffel::zeros(dirs, dim);
    for (k, dir) in directions.iter().enumerate() {
        let derivs = if opts.richardson {
            let d1 = central_diff(p, dir, field, h);
            let d2 = central_diff(p, dir, field, h / 2.0);
            d2.iter()
                .zip(&d1)
                .map(|(f2, f1)| {
                    f2.iter()
                        .zip(f1)
                        .map(|(a, b)| (4.0 * a - b) / 3.0)
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        } else {
            central_diff(p, dir, field, h)
        };
        for (j, dj) in derivs.iter().enumerate() {
            for (i, proj) in projectors.iter().enumerate() {
                let val: f64 = dj.iter().zip(proj).map(|(a, b)| a * b).sum();
                g.set(k, j, i, val);
            }
        }
    }
    Ok(g)
}

fn central_diff(
    p: &[f64],
    dir: &[f64],
    field: &(dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync),
    h: f64,
) -> Vec<Vec<f64>> {
    let plus: Vec<f64> = p.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let minus: Vec<f64> = p.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    let fp = field(&plus);
    let fm = field(&minus);
    fp.iter()
        .zip(&fm)
        .map(|(vp, vm)| {
            vp.iter()
                .zip(vm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// A curve in representation coordinates, sampled on a strictly increasing
/// grid, with optional frame coefficients of the velocity at each node.
#[derive(Clone, Debug)]
pub struct SampledCurve {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Velocity coefficients in the chart frame, when known.
    pub u: Option<Vec<Vec<f64>>>,
}

impl SampledCurve {
    pub fn new(t: Vec<f64>, x: Vec<Vec<f64>>, u: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if t.len() < 2 || t.len() != x.len() {
            return Err(CoreError::BadInput(
                "curve needs at least two samples with matching grid".into(),
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::BadInput("curve grid must strictly increase".into()));
        }
        if let Some(u) = &u {
            if u.len() != t.len() {
                return Err(CoreError::BadInput("one control row per node required".into()));
            }
        }
        Ok(SampledCurve { t, x, u })
    }

    /// Dense sampling of a closure on a uniform grid.
    pub fn from_fn(
        f: impl Fn(f64) -> Vec<f64>,
        t0: f64,
        t1: f64,
        steps: usize,
    ) -> Result<Self> {
        let grid: Vec<f64> = (0..=steps)
            .map(|i| t0 + (t1 - t0) * i as f64 / steps as f64)
            .collect();
        let x: Vec<Vec<f64>> = grid.iter().map(|&t| f(t)).collect();
        SampledCurve::new(grid, x, None)
    }

    /// Representation-space velocities by second-order differences.
    pub fn velocities(&self) -> Vec<Vec<f64>> {
        let k = self.t.len();
        let dim = self.x[0].len();
        let mut v = vec![vec![0.0; dim]; k];
        for i in 0..k {
            let (a, b, w) = if i == 0 {
                (0, 1, 2)
            } else if i == k - 1 {
                (k - 3, k - 2, k - 1)
            } else {
                (i - 1, i, i + 1)
            };
            // Three-point stencil exact to second order on uniform grids.
            let (ta, tb, tw) = (self.t[a], self.t[b], self.t[w]);
            for d in 0..dim {
                let (fa, fb, fw) = (self.x[a][d], self.x[b][d], self.x[w][d]);
                let ti = self.t[i];
                // Lagrange derivative at ti.
                v[i][d] = fa * (2.0 * ti - tb - tw) / ((ta - tb) * (ta - tw))
                    + fb * (2.0 * ti - ta - tw) / ((tb - ta) * (tb - tw))
                    + fw * (2.0 * ti - ta - tb) / ((tw - ta) * (tw - tb));
            }
        }
        v
    }

    /// Frame coefficients of the velocity: stored controls if present,
    /// otherwise the differenced velocity projected onto the frame.
    pub fn frame_coefficients(&self, chart: &FramedChart) -> Result<Vec<Vec<f64>>> {
        if let Some(u) = &self.u {
            return Ok(u.clone());
        }
        let v = self.velocities();
        let mut out = Vec::with_capacity(self.t.len());
        for (xi, vi) in self.x.iter().zip(&v) {
            let frame = chart.frame(xi)?;
            out.push(
                frame
                    .iter()
                    .map(|e| e.iter().zip(vi).map(|(a, b)| a * b).sum())
                    .collect(),
            );
        }
        Ok(out)
    }

    /// One-shot cubic interpolation; for repeated queries build an
    /// [`CurveInterp`] once instead.
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        self.interpolator().position(t)
    }

    pub fn interpolator(&self) -> CurveInterp<'_> {
        CurveInterp {
            curve: self,
            v: self.velocities(),
        }
    }
}

/// Cubic Hermite interpolator over a sampled curve with cached endpoint
/// velocities; used for integrator midpoints between samples.
pub struct CurveInterp<'a> {
    curve: &'a SampledCurve,
    v: Vec<Vec<f64>>,
}

impl CurveInterp<'_> {
    pub fn position(&self, t: f64) -> Vec<f64> {
        let (ts, xs) = (&self.curve.t, &self.curve.x);
        let k = ts.len();
        if t <= ts[0] {
            return xs[0].clone();
        }
        if t >= ts[k - 1] {
            return xs[k - 1].clone();
        }
        let idx = match ts.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return xs[i].clone(),
            Err(i) => i - 1,
        };
        let h = ts[idx + 1] - ts[idx];
        let s = (t - ts[idx]) / h;
        let (h00, h10, h01, h11) = (
            2.0 * s * s * s - 3.0 * s * s + 1.0,
            s * s * s - 2.0 * s * s + s,
            -2.0 * s * s * s + 3.0 * s * s,
            s * s * s - s * s,
        );
        (0..xs[0].len())
            .map(|d| {
                h00 * xs[idx][d]
                    + h10 * h * self.v[idx][d]
                    + h01 * xs[idx + 1][d]
                    + h11 * h * self.v[idx + 1][d]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

enum GammaKind {
    Tangential,
    Normal,
}

/// Parallel transport of tangent coefficients `v0` along a curve; returns the
/// coefficient path at every node. The transported norm is preserved up to
/// integrator error.
pub fn parallel_transport(
    chart: &FramedChart,
    curve: &SampledCurve,
    v0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if v0.len() != chart.n {
        return Err(CoreError::Dimension(format!(
            "initial vector has {} coefficients, chart dimension is {}",
            v0.len(),
            chart.n
        )));
    }
    transport_coefficients(chart, curve, v0, GammaKind::Tangential)
}

/// Normal-parallel transport of normal coefficients along a curve.
pub fn normal_parallel_transport(
    chart: &FramedChart,
    curve: &SampledCurve,
    w0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let amb = chart.ambient()?;
    if w0.len() != amb.codim {
        return Err(CoreError::Dimension(format!(
            "initial normal vector has {} coefficients, codimension is {}",
            w0.len(),
            amb.codim
        )));
    }
    if amb.codim == 0 {
        return Ok(vec![Vec::new(); curve.t.len()]);
    }
    transport_coefficients(chart, curve, w0, GammaKind::Normal)
}

/// Transports the full orthonormal frame along the curve; column `j` of the
/// returned matrix at node `i` holds the coefficients of the parallel field
/// started at basis vector `j`.
pub fn transport_frame(chart: &FramedChart, curve: &SampledCurve) -> Result<Vec<Matrix>> {
    transport_frame_kind(chart, curve, GammaKind::Tangential)
}

/// Normal analogue of [`transport_frame`].
pub fn transport_normal_frame(chart: &FramedChart, curve: &SampledCurve) -> Result<Vec<Matrix>> {
    transport_frame_kind(chart, curve, GammaKind::Normal)
}

fn transport_frame_kind(
    chart: &FramedChart,
    curve: &SampledCurve,
    kind: GammaKind,
) -> Result<Vec<Matrix>> {
    let dim = match kind {
        GammaKind::Tangential => chart.n,
        GammaKind::Normal => chart.ambient()?.codim,
    };
    let mut columns = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        columns.push(transport_coefficients(chart, curve, &e, kind_copy(&kind))?);
    }
    let mut out = Vec::with_capacity(curve.t.len());
    for i in 0..curve.t.len() {
        let mut m = Matrix::zeros(dim.max(1), dim.max(1));
        if dim == 0 {
            m = Matrix::identity(1);
        }
        for (j, col) in columns.iter().enumerate() {
            for r in 0..dim {
                m[(r, j)] = col[i][r];
            }
        }
        out.push(m);
    }
    Ok(out)
}

fn kind_copy(kind: &GammaKind) -> GammaKind {
    match kind {
        GammaKind::Tangential => GammaKind::Tangential,
        GammaKind::Normal => GammaKind::Normal,
    }
}

fn gamma_for(chart: &FramedChart, x: &[f64], kind: &GammaKind) -> Result<ChristoffelTensor> {
    match kind {
        GammaKind::Tangential => match chart.gamma_closed(x) {
            Some(g) => Ok(g),
            None => christoffel_numeric(chart, x),
        },
        GammaKind::Normal => normal_christoffel(chart, x),
    }
}

fn transport_coefficients(
    chart: &FramedChart,
    curve: &SampledCurve,
    z0: &[f64],
    kind: GammaKind,
) -> Result<Vec<Vec<f64>>> {
    chart.check_domain(&curve.x[0])?;
    let u = curve.frame_coefficients(chart)?;
    let mut z = z0.to_vec();
    let mut path = Vec::with_capacity(curve.t.len());
    path.push(z.clone());
    let interp = curve.interpolator();
    // Cache for constant-coefficient charts.
    let cached = if chart.constant_christoffel {
        Some(gamma_for(chart, &curve.x[0], &kind)?)
    } else {
        None
    };
    for i in 0..curve.t.len() - 1 {
        chart.check_domain(&curve.x[i + 1])?;
        let h = curve.t[i + 1] - curve.t[i];
        let tm = 0.5 * (curve.t[i] + curve.t[i + 1]);
        let xm = chart.retract(&interp.position(tm));
        let um: Vec<f64> = u[i].iter().zip(&u[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let rate = |x: &[f64], uu: &[f64], z: &[f64]| -> Result<Vec<f64>> {
            let g = match &cached {
                Some(g) => g.clone(),
                None => gamma_for(chart, x, &kind)?,
            };
            let mut dz = vec![0.0; z.len()];
            for (k, &uk) in uu.iter().enumerate() {
                if uk == 0.0 {
                    continue;
                }
                for i2 in 0..z.len() {
                    let mut acc = 0.0;
                    for (j2, &zj) in z.iter().enumerate() {
                        acc += g.get(k, j2, i2) * zj;
                    }
                    dz[i2] -= uk * acc;
                }
            }
            Ok(dz)
        };
        let k1 = rate(&curve.x[i], &u[i], &z)?;
        let z2: Vec<f64> = z.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = rate(&xm, &um, &z2)?;
        let z3: Vec<f64> = z.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = rate(&xm, &um, &z3)?;
        let z4: Vec<f64> = z.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = rate(&curve.x[i + 1], &u[i + 1], &z4)?;
        for d in 0..z.len() {
            z[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        path.push(z.clone());
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Geodesics
// ---------------------------------------------------------------------------

/// Integrates the geodesic equation from `x0` with initial frame
/// coefficients `v0`, fixed step RK4 with post-step retraction.
pub fn geodesic(
    chart: &FramedChart,
    x0: &[f64],
    v0: &[f64],
    duration: f64,
    dt: f64,
) -> Result<SampledCurve> {
    chart.check_domain(x0)?;
    if v0.len() != chart.n {
        return Err(CoreError::Dimension("initial velocity coefficients".into()));
    }
    let steps = (duration / dt).round().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut x = x0.to_vec();
    let mut u = v0.to_vec();
    let mut ts = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps + 1);
    ts.push(0.0);
    xs.push(x.clone());
    us.push(u.clone());
    let rate = |x: &[f64], u: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let frame = chart.frame_unchecked(x);
        let mut dx = vec![0.0; x.len()];
        for (k, uk) in u.iter().enumerate() {
            for (d, fv) in frame[k].iter().enumerate() {
                dx[d] += uk * fv;
            }
        }
        let g = match chart.gamma_closed(x) {
            Some(g) => g,
            None => christoffel_numeric(chart, x)?,
        };
        let mut du = vec![0.0; u.len()];
        for i in 0..u.len() {
            let mut acc = 0.0;
            for (k, &uk) in u.iter().enumerate() {
                for (j, &uj) in u.iter().enumerate() {
                    acc += g.get(k, j, i) * uk * uj;
                }
            }
            du[i] = -acc;
        }
        Ok((dx, du))
    };
    for s in 0..steps {
        let (kx1, ku1) = rate(&x, &u)?;
        let x2 = add_scaled(&x, &kx1, 0.5 * h);
        let u2 = add_scaled(&u, &ku1, 0.5 * h);
        let (kx2, ku2) = rate(&x2, &u2)?;
        let x3 = add_scaled(&x, &kx2, 0.5 * h);
        let u3 = add_scaled(&u, &ku2, 0.5 * h);
        let (kx3, ku3) = rate(&x3, &u3)?;
        let x4 = add_scaled(&x, &kx3, h);
        let u4 = add_scaled(&u, &ku3, h);
        let (kx4, ku4) = rate(&x4, &u4)?;
        for d in 0..x.len() {
            x[d] += h / 6.0 * (kx1[d] + 2.0 * kx2[d] + 2.0 * kx3[d] + kx4[d]);
        }
        for d in 0..u.len() {
            u[d] += h / 6.0 * (ku1[d] + 2.0 * ku2[d] + 2.0 * ku3[d] + ku4[d]);
        }
        x = chart.retract(&x);
        chart.check_domain(&x)?;
        ts.push((s + 1) as f64 * h);
        xs.push(x.clone());
        us.push(u.clone());
    }
    SampledCurve::new(ts, xs, Some(us))
}

fn add_scaled(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Max deviation of a curve from the geodesic equation, in coefficient
/// space: `max_i |du_i/dt + sum Gamma(k,j,i) u_k u_j|`.
pub fn geodesic_residual(chart: &FramedChart, curve: &SampledCurve) -> Result<f64> {
    let u = curve.frame_coefficients(chart)?;
    let k = curve.t.len();
    let mut worst: f64 = 0.0;
    for i in 1..k - 1 {
        let g = christoffel(chart, &curve.x[i])?;
        let dt = curve.t[i + 1] - curve.t[i - 1];
        for d in 0..chart.n {
            let dud = (u[i + 1][d] - u[i - 1][d]) / dt;
            let mut acc = 0.0;
            for (a, &ua) in u[i].iter().enumerate() {
                for (b, &ub) in u[i].iter().enumerate() {
                    acc += g.get(a, b, d) * ua * ub;
                }
            }
            worst = worst.max((dud + acc).abs());
        }
    }
    Ok(worst)
}

/// Structural constants of a 2-chart: `[e1, e2] = c1 e1 + c2 e2`.
pub fn structural_constants_2d(chart: &FramedChart, x: &[f64]) -> Result<(f64, f64)> {
    if chart.n != 2 {
        return Err(CoreError::Dimension(format!(
            "structural constants need a 2-dimensional chart, got n={}",
            chart.n
        )));
    }
    let g = christoffel(chart, x)?;
    // c1 = <D_{e1} e2, e1>, c2 = <D_{e2} e2, e1> (the <D_{e2} e1, .> term
    // drops by antisymmetry).
    Ok((*g.get(0, 1, 0), *g.get(1, 1, 0)))
}

/// Gaussian curvature of a 2-chart from the connection coefficients and
/// their frame-directional derivatives.
pub fn gaussian_curvature(chart: &FramedChart, x: &[f64]) -> Result<f64> {
    if chart.n != 2 {
        return Err(CoreError::Dimension(format!(
            "gaussian curvature needs a 2-dimensional chart, got n={}",
            chart.n
        )));
    }
    chart.check_domain(x)?;
    // kappa = e1(b) - e2(a) - a^2 - b^2 with a = Gamma(1,2,1), b = Gamma(2,2,1).
    let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = fd_default_step(scale);
    let frame = chart.frame_unchecked(x);
    let ab = |p: &[f64]| -> Result<(f64, f64)> {
        let g = christoffel(chart, p)?;
        Ok((*g.get(0, 1, 0), *g.get(1, 1, 0)))
    };
    let (a0, b0) = ab(x)?;
    let shifted = |dir: &[f64], s: f64| -> Vec<f64> {
        chart.retract(&x.iter().zip(dir).map(|(v, d)| v + s * d).collect::<Vec<f64>>())
    };
    let (_, b_p) = ab(&shifted(&frame[0], h))?;
    let (_, b_m) = ab(&shifted(&frame[0], -h))?;
    let (a_p, _) = ab(&shifted(&frame[1], h))?;
    let (a_m, _) = ab(&shifted(&frame[1], -h))?;
    let e1_b = (b_p - b_m) / (2.0 * h);
    let e2_a = (a_p - a_m) / (2.0 * h);
    Ok(e1_b - e2_a - a0 * a0 - b0 * b0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{
        circle_r3, euclidean, flat_cylinder, se3, se3_flat, sphere, AmbientData, SQRT2,
    };
    use crate::num::Scalar;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sphere_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
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
            if x[n] > 0.1 {
                return x;
            }
        }
    }

    #[test]
    fn sphere_closed_form_matches_expected_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = sphere(3, true);
        for _ in 0..50 {
            let x = random_sphere_point(&mut rng, 3);
            let g = christoffel(&ch, &x).unwrap();
            let mut s = [0.0; 5];
            for k in (0..4).rev() {
                s[k] = s[k + 1] + x[k] * x[k];
            }
            for k in 0..3 {
                for j in 0..3 {
                    for i in 0..3 {
                        let expect = if j < k && i == k {
                            x[j] / (s[j] * s[j + 1]).sqrt()
                        } else if i < k && j == k {
                            -(x[i] / (s[i] * s[i + 1]).sqrt())
                        } else {
                            0.0
                        };
                        assert_relative_eq!(*g.get(k, j, i), expect, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn numeric_gamma_matches_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // Spheres n = 2..5.
        for n in 2..=5 {
            let ch = sphere(n, true);
            for _ in 0..25 {
                let x = random_sphere_point(&mut rng, n);
                let closed = ch.gamma_closed(&x).unwrap();
                let numeric = christoffel_numeric(&ch, &x).unwrap();
                assert!(closed.max_abs_diff(&numeric) <= 1e-6);
                assert!(numeric.antisymmetry_residual() <= 1e-7);
            }
        }
        // Euclidean: numeric coefficients vanish to machine precision.
        let e = euclidean(4);
        let numeric = christoffel_numeric(&e, &[0.4, -1.0, 2.0, 0.0]).unwrap();
        assert!(numeric.max_abs() <= 1e-12);
        // Rigid motions via the 16-dim embedding reproduce the constant table.
        let ch = se3();
        let x = ch.base_point.clone();
        let closed = ch.gamma_closed(&x).unwrap();
        let numeric = christoffel_numeric(&ch, &x).unwrap();
        assert!(closed.max_abs_diff(&numeric) <= 1e-6);
        // Also at a non-identity configuration.
        let rot = crate::linalg::exp_skew(
            &crate::linalg::skew_basis(3, crate::linalg::SkewIndex::new(1, 3).unwrap())
                .unwrap()
                .scale(0.8),
        )
        .unwrap();
        let mut x2 = rot.as_slice().to_vec();
        x2.extend([0.5, -0.25, 1.5]);
        let numeric2 = christoffel_numeric(&ch, &x2).unwrap();
        assert!(closed.max_abs_diff(&numeric2) <= 1e-6);
    }

    #[test]
    fn normal_gamma_se3_table_and_vanishing_rows() {
        let ch = se3();
        let g = normal_christoffel(&ch, &ch.base_point.clone()).unwrap();
        let a = 1.0 / (2.0 * SQRT2);
        // D^perp_{Y1} applied to the second symmetric field has coefficient
        // -1/(2 sqrt 2) on the third.
        assert_relative_eq!(*g.get(0, 1, 2), -a, epsilon = 1e-8);
        assert_relative_eq!(*g.get(0, 2, 1), a, epsilon = 1e-8);
        // Translational directions are flat for every normal field.
        for k in 3..6 {
            for l in 0..10 {
                for m in 0..10 {
                    assert!(g.get(k, l, m).abs() <= 1e-8);
                }
            }
        }
        // Constant affine-row fields are parallel in all directions.
        for k in 0..6 {
            for l in 6..10 {
                for m in 0..10 {
                    assert!(g.get(k, l, m).abs() <= 1e-8);
                    assert!(g.get(k, m, l).abs() <= 1e-8);
                }
            }
        }
        assert!(g.antisymmetry_residual() <= 1e-7);
        // More table rows: D^perp_{Y1} of the first symmetric field is
        // (Psi_1 - Psi_2)/2.
        assert_relative_eq!(*g.get(0, 0, 3), 0.5, epsilon = 1e-8);
        assert_relative_eq!(*g.get(0, 0, 4), -0.5, epsilon = 1e-8);
        // Circle in 3-space: both normal fields are parallel along the curve.
        let circ = circle_r3();
        for phi in [0.0f64, 0.9, 2.2] {
            let x = vec![phi.sin(), 1.0 - phi.cos()];
            let g = normal_christoffel(&circ, &x).unwrap();
            assert!(g.max_abs() <= 1e-9);
        }
    }

    #[test]
    fn transport_straight_line_is_constant() {
        let ch = euclidean(3);
        let curve = SampledCurve::from_fn(|t| vec![t, 2.0 * t, -t], 0.0, 1.0, 100).unwrap();
        let path = parallel_transport(&ch, &curve, &[1.0, 0.5, -0.25]).unwrap();
        for z in &path {
            assert_relative_eq!(z[0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(z[1], 0.5, epsilon = 1e-12);
            assert_relative_eq!(z[2], -0.25, epsilon = 1e-12);
        }
    }

    /// Independent transport oracle on embedded spheres: step along the
    /// curve projecting the carried ambient vector onto the new tangent
    /// plane and renormalizing.
    fn ambient_projection_transport(curve: &SampledCurve, v0_ambient: &[f64]) -> Vec<f64> {
        let mut v = v0_ambient.to_vec();
        for i in 1..curve.t.len() {
            let x = &curve.x[i];
            let n2: f64 = x.iter().map(|a| a * a).sum();
            let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
            let norm_before: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for d in 0..v.len() {
                v[d] -= dot / n2 * x[d];
            }
            let norm_after: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for d in v.iter_mut() {
                *d *= norm_before / norm_after;
            }
        }
        v
    }

    #[test]
    fn latitude_loop_holonomy_matches_cone_development() {
        // One loop around the latitude circle at polar angle phi rotates the
        // transported tangent plane by 2 pi (1 - cos phi).
        let ch = sphere(2, true);
        for phi in [std::f64::consts::PI / 6.0, std::f64::consts::PI / 3.0] {
            let curve = SampledCurve::from_fn(
                |t| vec![phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()],
                0.0,
                2.0 * std::f64::consts::PI,
                4000,
            )
            .unwrap();
            let p1 = parallel_transport(&ch, &curve, &[1.0, 0.0]).unwrap();
            let p2 = parallel_transport(&ch, &curve, &[0.0, 1.0]).unwrap();
            let end1 = p1.last().unwrap();
            let end2 = p2.last().unwrap();
            // Net frame rotation angle out of the coefficient columns.
            let measured = end1[1].atan2(end1[0]);
            let expected_mag = 2.0 * std::f64::consts::PI * (1.0 - phi.cos());
            let wrap = |a: f64| {
                let two_pi = 2.0 * std::f64::consts::PI;
                ((a % two_pi) + two_pi) % two_pi
            };
            assert!(
                (wrap(measured) - wrap(expected_mag)).abs() < 1e-5
                    || (wrap(-measured) - wrap(expected_mag)).abs() < 1e-5,
                "phi={phi}: measured {measured}, expected magnitude {expected_mag}"
            );
            // The transported pair stays orthonormal.
            let dot: f64 = end1.iter().zip(end2).map(|(a, b)| a * b).sum();
            assert!(dot.abs() <= 1e-7);
            let n1: f64 = end1.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((n1 - 1.0).abs() <= 1e-8);
            // Independent oracle: ambient projection transport of e1.
            let frame0 = ch.frame(&curve.x[0]).unwrap();
            let oracle_end = ambient_projection_transport(&curve, &frame0[0]);
            let frame_end = ch.frame(curve.x.last().unwrap()).unwrap();
            let oracle_coeff: Vec<f64> = frame_end
                .iter()
                .map(|e| e.iter().zip(&oracle_end).map(|(a, b)| a * b).sum())
                .collect();
            let diff = ((oracle_coeff[0] - end1[0]).powi(2)
                + (oracle_coeff[1] - end1[1]).powi(2))
            .sqrt();
            assert!(diff <= 1e-3, "oracle deviation {diff}");
        }
    }

    #[test]
    fn transport_is_reversible_and_norm_preserving() {
        let ch = sphere(2, true);
        let curve = SampledCurve::from_fn(
            |t| {
                let phi = 0.9 + 0.2 * (3.0 * t).sin();
                vec![phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()]
            },
            0.0,
            2.0,
            2000,
        )
        .unwrap();
        let v0 = [0.6, -0.8];
        let fwd = parallel_transport(&ch, &curve, &v0).unwrap();
        let end = fwd.last().unwrap().clone();
        let norm_end: f64 = end.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm_end - 1.0).abs() <= 1e-8);
        // Reverse the curve and transport back.
        let tmax = *curve.t.last().unwrap();
        let rev = SampledCurve::new(
            curve.t.iter().map(|t| tmax - t).rev().collect(),
            curve.x.iter().rev().cloned().collect(),
            None,
        )
        .unwrap();
        let back = parallel_transport(&ch, &rev, &end).unwrap();
        let home = back.last().unwrap();
        assert!((home[0] - v0[0]).abs() <= 1e-7);
        assert!((home[1] - v0[1]).abs() <= 1e-7);
    }

    #[test]
    fn transport_around_closed_curves_is_an_isometry() {
        // Transporting the full frame around wavy closed loops keeps it
        // orthonormal; the holonomy is a rotation, never a shear.
        let ch = sphere(2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..5 {
            let a: f64 = rng.gen_range(0.5..1.0);
            let b: f64 = rng.gen_range(0.05..0.2);
            let k = rng.gen_range(2..5) as f64;
            let curve = SampledCurve::from_fn(
                |t| {
                    let phi = a + b * (k * t).sin();
                    vec![phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()]
                },
                0.0,
                2.0 * std::f64::consts::PI,
                4000,
            )
            .unwrap();
            let frames = transport_frame(&ch, &curve).unwrap();
            let end = frames.last().unwrap();
            assert!(end.orthogonality_defect() <= 1e-7);
            assert!((end.determinant() - 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn normal_transport_trivial_in_codimension_one_and_on_zero() {
        let ch = sphere(2, true);
        let curve = SampledCurve::from_fn(
            |t| vec![0.5 * t.cos(), 0.5 * t.sin(), (1.0f64 - 0.25).sqrt()],
            0.0,
            3.0,
            300,
        )
        .unwrap();
        let path = normal_parallel_transport(&ch, &curve, &[1.0]).unwrap();
        for w in &path {
            assert_relative_eq!(w[0], 1.0, epsilon = 1e-9);
        }
        let zero = normal_parallel_transport(&ch, &curve, &[0.0]).unwrap();
        assert!(zero.iter().all(|w| w[0] == 0.0));
    }

    #[test]
    fn geodesics_run_straight_and_along_great_circles() {
        let e = euclidean(2);
        let line = geodesic(&e, &[0.0, 0.0], &[0.6, 0.8], 1.0, 1e-2).unwrap();
        let end = line.x.last().unwrap();
        assert_relative_eq!(end[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(end[1], 0.8, epsilon = 1e-12);

        let ch = sphere(2, true);
        // Unit-speed geodesic from the pole; the chart covers an arc shorter
        // than a quarter turn, so integrate to T = 1.2 and compare against
        // the great-circle closed form cos(t) p + sin(t) w.
        let t_end = 1.2;
        let curve = geodesic(&ch, &[0.0, 0.0, 1.0], &[1.0, 0.0], t_end, 1e-3).unwrap();
        let frame0 = ch.frame(&[0.0, 0.0, 1.0]).unwrap();
        let w = &frame0[0];
        let end = curve.x.last().unwrap();
        for d in 0..3 {
            let expect = t_end.cos() * [0.0, 0.0, 1.0][d] + t_end.sin() * w[d];
            assert_relative_eq!(end[d], expect, epsilon = 1e-6);
        }
        // Speed preserved.
        let us = curve.u.as_ref().unwrap();
        for u in us {
            let speed: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((speed - 1.0).abs() <= 1e-8);
        }
        assert!(geodesic_residual(&ch, &curve).unwrap() <= 1e-6);
        // A latitude circle is not a geodesic; its residual stays away from 0.
        let phi = 1.0;
        let lat = SampledCurve::from_fn(
            |t| vec![phi.sin() * t.cos(), phi.sin() * t.sin(), phi.cos()],
            0.0,
            2.0,
            500,
        )
        .unwrap();
        assert!(geodesic_residual(&ch, &lat).unwrap() > 0.1);
    }

    #[test]
    fn structural_constants_match_commutator() {
        let e = euclidean(2);
        assert_eq!(structural_constants_2d(&e, &[0.3, 0.4]).unwrap(), (0.0, 0.0));
        let ch = sphere(2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x = random_sphere_point(&mut rng, 2);
            let (c1, c2) = structural_constants_2d(&ch, &x).unwrap();
            // Differenced commutator of the frame fields, projected back.
            let h = 1e-6;
            let f0 = ch.frame_unchecked(&x);
            let deriv = |dir: &Vec<f64>, field: usize| -> Vec<f64> {
                let xp: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
                let xm: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
                let fp = ch.frame_unchecked(&xp);
                let fm = ch.frame_unchecked(&xm);
                fp[field]
                    .iter()
                    .zip(&fm[field])
                    .map(|(p, m)| (p - m) / (2.0 * h))
                    .collect()
            };
            let comm: Vec<f64> = deriv(&f0[0], 1)
                .iter()
                .zip(&deriv(&f0[1], 0))
                .map(|(a, b)| a - b)
                .collect();
            let c1_fd: f64 = comm.iter().zip(&f0[0]).map(|(a, b)| a * b).sum();
            let c2_fd: f64 = comm.iter().zip(&f0[1]).map(|(a, b)| a * b).sum();
            assert_relative_eq!(c1, c1_fd, epsilon = 1e-7);
            assert_relative_eq!(c2, c2_fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn curvature_of_builtins() {
        let ch = sphere(2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let x = random_sphere_point(&mut rng, 2);
            assert_relative_eq!(gaussian_curvature(&ch, &x).unwrap(), 1.0, epsilon = 1e-6);
        }
        let e = euclidean(2);
        assert!(gaussian_curvature(&e, &[0.2, -0.7]).unwrap().abs() <= 1e-9);
        let cyl = flat_cylinder();
        let x = vec![0.6, 0.8, 1.3];
        assert!(gaussian_curvature(&cyl, &x).unwrap().abs() <= 1e-6);
        assert!(gaussian_curvature(&euclidean(3), &[0.0; 3]).is_err());
    }

    /// A radius-R sphere built as a user chart (no closed-form
    /// coefficients): exercises the numeric connection path end to end.
    fn scaled_sphere(radius: f64) -> crate::chart::FramedChart {
        fn frame_r<R: Scalar>(radius: f64, x: &[R]) -> Vec<Vec<R>> {
            let unit: Vec<R> = x
                .iter()
                .map(|v| v.clone() / R::from_f64(radius))
                .collect();
            crate::chart::test_support::sphere_frame_public::<R>(2, &unit)
        }
        let r = radius;
        crate::chart::FramedChart::custom(
            format!("sphere_r{r}"),
            2,
            3,
            vec![0.0, 0.0, r],
            Box::new(move |x: &[f64]| frame_r::<f64>(r, x)),
            Box::new(move |x: &[crate::num::Jet]| frame_r::<crate::num::Jet>(r, x)),
            Box::new(move |x: &[f64]| {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - r).abs() > 1e-6 * r {
                    Err(format!("|x| = {norm} off the radius-{r} sphere"))
                } else {
                    Ok(())
                }
            }),
            Box::new(move |x: &[f64]| {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x.iter().map(|v| v * r / norm).collect()
            }),
        )
        .with_ambient(AmbientData {
            dim: 3,
            codim: 1,
            embedding: Box::new(|x| x.to_vec()),
            frame_ambient: Box::new(move |p| {
                let unit: Vec<f64> = p.iter().map(|v| v / r).collect();
                crate::chart::test_support::sphere_frame_public::<f64>(2, &unit)
            }),
            normal_frame: Box::new(|p| {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                vec![p.iter().map(|v| v / norm).collect()]
            }),
        })
    }

    #[test]
    fn scaled_sphere_curvature_matches_second_fundamental_form() {
        for radius in [0.5f64, 2.0, 3.5] {
            let ch = scaled_sphere(radius);
            let x = ch.retract(&[0.3 * radius, -0.2 * radius, 0.9 * radius]);
            let kappa = gaussian_curvature(&ch, &x).unwrap();
            // Oracle: det of the second fundamental form, from differenced
            // ambient frames projected on the unit normal.
            let amb = ch.ambient().unwrap();
            let p = (amb.embedding)(&x);
            let frame = (amb.frame_ambient)(&p);
            let normal = &(amb.normal_frame)(&p)[0];
            let h = fd_default_step(radius);
            let mut ii = [[0.0; 2]; 2];
            for a in 0..2 {
                let plus: Vec<f64> = p.iter().zip(&frame[a]).map(|(v, d)| v + h * d).collect();
                let minus: Vec<f64> = p.iter().zip(&frame[a]).map(|(v, d)| v - h * d).collect();
                let fp = (amb.frame_ambient)(&plus);
                let fm = (amb.frame_ambient)(&minus);
                for b in 0..2 {
                    let deriv: Vec<f64> = fp[b]
                        .iter()
                        .zip(&fm[b])
                        .map(|(q, m)| (q - m) / (2.0 * h))
                        .collect();
                    ii[a][b] = deriv.iter().zip(normal).map(|(q, m)| q * m).sum();
                }
            }
            let det = ii[0][0] * ii[1][1] - ii[0][1] * ii[1][0];
            assert_relative_eq!(kappa, det, epsilon = 1e-5);
            assert_relative_eq!(kappa, 1.0 / (radius * radius), epsilon = 1e-5);
        }
    }

    #[test]
    fn se3_flat_normal_fields_are_parallel_along_example_curve() {
        // Along any curve in the flat chart the constant normal frame has
        // vanishing normal derivatives, so coefficients stay put.
        let ch = se3_flat();
        let curve = SampledCurve::from_fn(
            |t| vec![SQRT2 * t, 0.0, 0.0, 0.0, 0.0, t],
            0.0,
            1.0,
            200,
        )
        .unwrap();
        let w0 = [0.3, -0.5, 0.1, 0.7, 0.0, 0.2, 0.05, -0.1, 0.4, 0.9];
        let path = normal_parallel_transport(&ch, &curve, &w0).unwrap();
        for w in &path {
            for (a, b) in w.iter().zip(&w0) {
                assert_relative_eq!(a, b, epsilon = 1e-9);
            }
        }
    }
}
