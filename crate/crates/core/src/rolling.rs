//! Configuration spaces of rolling, the rolling distribution fields,
//! trajectory integration, condition residuals, rolling freedom, extension
//! to ambient isometries and their reconstruction.
//!
//! Conventions (documented once, used everywhere): the isometry matrix `A`
//! has entries `a_{ik} = <q e_k, ehat_i>`, so `q e_k = sum_i a_{ik} ehat_i`
//! (columns indexed by the rolling frame, rows by the still frame).
//! Controls are the coefficients of `xdot` in the orthonormal frame `{e_k}`.
//! Along a unit control in direction `e_k` the isometry evolves by
//! `Adot = A Omega^(k)` with
//! `Omega^(k) = S^(k) - sum_r a_{rk} A^T Shat^(r) A`,
//! where `S^(k)_{ij} = Gamma(k, j, i)` is the connection matrix.

use crate::chart::{ChartKind, ChartOps, Christoffel, ChristoffelTensor, FramedChart};
use crate::connection::{normal_christoffel_with, transport_frame, transport_normal_frame, FdOptions, SampledCurve};
use crate::error::{CoreError, Result};
use crate::flag::VectorFieldHandle;
use crate::linalg::{exp_skew, project_to_so, rank_of_span, Matrix, RankPolicy};
use crate::num::{Jet, Scalar};
use std::sync::Arc;

/// Orthogonality tolerance for configuration isometries.
pub const SO_TOL: f64 = 1e-9;

/// Time derivatives of the state blocks `(x, x_hat, A, B?)` in flat form.
type BlockRates = (Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>);
type FieldEval = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Two charts of equal intrinsic dimension, one rolling on the other.
#[derive(Clone)]
pub struct ManifoldPair {
    pub m: Arc<FramedChart>,
    pub m_hat: Arc<FramedChart>,
}

impl ManifoldPair {
    pub fn new(m: FramedChart, m_hat: FramedChart) -> Result<Self> {
        if m.n != m_hat.n {
            return Err(CoreError::Dimension(format!(
                "rolling needs equal dimensions: {} has n={}, {} has n={}",
                m.name, m.n, m_hat.name, m_hat.n
            )));
        }
        Ok(ManifoldPair {
            m: Arc::new(m),
            m_hat: Arc::new(m_hat),
        })
    }

    pub fn n(&self) -> usize {
        self.m.n
    }

    /// Shared codimension of the two embeddings (required for extensions).
    pub fn codim(&self) -> Result<usize> {
        let a = self.m.ambient()?;
        let b = self.m_hat.ambient()?;
        if a.codim != b.codim {
            return Err(CoreError::Dimension(format!(
                "codimensions differ: {} vs {}",
                a.codim, b.codim
            )));
        }
        Ok(a.codim)
    }

    /// Representation dimension of the configuration space chart.
    pub fn rep_dim(&self, extended: bool) -> usize {
        let n = self.n();
        let base = self.m.m + self.m_hat.m + n * n;
        if extended {
            let nu = self.m.ambient.as_ref().map(|a| a.codim).unwrap_or(0);
            base + nu * nu
        } else {
            base
        }
    }

    pub fn state_to_rep(&self, q: &ConfigPoint) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.rep_dim(false));
        p.extend_from_slice(&q.x);
        p.extend_from_slice(&q.x_hat);
        p.extend_from_slice(q.a.as_slice());
        p
    }
}

/// A configuration: contact points on both manifolds and the tangent-space
/// isometry between them.
#[derive(Clone, Debug)]
pub struct ConfigPoint {
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub a: Matrix,
}

impl ConfigPoint {
    pub fn new(pair: &ManifoldPair, x: Vec<f64>, x_hat: Vec<f64>, a: Matrix) -> Result<Self> {
        let q = ConfigPoint { x, x_hat, a };
        q.validate(pair)?;
        Ok(q)
    }

    /// Canonical configuration: both base points, identity isometry.
    pub fn canonical(pair: &ManifoldPair) -> Self {
        ConfigPoint {
            x: pair.m.base_point.clone(),
            x_hat: pair.m_hat.base_point.clone(),
            a: Matrix::identity(pair.n()),
        }
    }

    pub fn validate(&self, pair: &ManifoldPair) -> Result<()> {
        pair.m.check_domain(&self.x)?;
        pair.m_hat.check_domain(&self.x_hat)?;
        let n = pair.n();
        if self.a.nrows() != n || self.a.ncols() != n {
            return Err(CoreError::Dimension(format!(
                "isometry must be {n}x{n}"
            )));
        }
        let defect = self.a.orthogonality_defect();
        if defect > SO_TOL {
            return Err(CoreError::DriftTooLarge {
                drift: defect,
                limit: SO_TOL,
            });
        }
        let det = self.a.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(CoreError::BadDeterminant { det });
        }
        Ok(())
    }
}

/// A configuration extended by the normal-space isometry.
#[derive(Clone, Debug)]
pub struct ExtConfigPoint {
    pub base: ConfigPoint,
    pub b: Matrix,
}

impl ExtConfigPoint {
    pub fn new(pair: &ManifoldPair, base: ConfigPoint, b: Matrix) -> Result<Self> {
        base.validate(pair)?;
        let nu = pair.codim()?;
        if b.nrows() != nu || b.ncols() != nu {
            return Err(CoreError::Dimension(format!("normal isometry must be {nu}x{nu}")));
        }
        if nu > 0 {
            let defect = b.orthogonality_defect();
            if defect > SO_TOL {
                return Err(CoreError::DriftTooLarge {
                    drift: defect,
                    limit: SO_TOL,
                });
            }
            let det = b.determinant();
            if (det - 1.0).abs() > 1e-6 {
                return Err(CoreError::BadDeterminant { det });
            }
        }
        Ok(ExtConfigPoint { base, b })
    }
}

/// A rolling trajectory on a strictly increasing time grid. `b` is present
/// for extended (ambient) rollings.
#[derive(Clone, Debug)]
pub struct RollingTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<ConfigPoint>,
    pub b: Option<Vec<Matrix>>,
    pub u: Vec<Vec<f64>>,
}

impl RollingTrajectory {
    pub fn last_state(&self) -> &ConfigPoint {
        self.states.last().expect("non-empty trajectory")
    }

    /// The rolling-side curve with stored controls.
    pub fn x_curve(&self) -> Result<SampledCurve> {
        SampledCurve::new(
            self.t.clone(),
            self.states.iter().map(|s| s.x.clone()).collect(),
            Some(self.u.clone()),
        )
    }

    /// The still-side curve; its frame coefficients are `A u`.
    pub fn x_hat_curve(&self) -> Result<SampledCurve> {
        let u_hat: Vec<Vec<f64>> = self
            .states
            .iter()
            .zip(&self.u)
            .map(|(s, u)| s.a.matvec(u))
            .collect();
        SampledCurve::new(
            self.t.clone(),
            self.states.iter().map(|s| s.x_hat.clone()).collect(),
            Some(u_hat),
        )
    }
}

/// Dimension of the configuration space: `n(n+3)/2`, plus `nu(nu-1)/2` for
/// the normal extension.
pub fn config_dim(pair: &ManifoldPair, extended: bool) -> Result<usize> {
    let n = pair.n();
    let base = n * (n + 3) / 2;
    if extended {
        let nu = pair.codim()?;
        Ok(base + nu * (nu - 1) / 2)
    } else {
        Ok(base)
    }
}

// ---------------------------------------------------------------------------
// Distribution coefficients and fields
// ---------------------------------------------------------------------------

/// `Omega = S^(k) - sum_r a_{rk} A^T Shat^(r) A` in flat row-major storage.
fn omega_from_gammas<R: Scalar>(
    n: usize,
    k: usize,
    gam: &Christoffel<R>,
    gam_hat: &Christoffel<R>,
    a: &[R],
) -> Vec<R> {
    let mut omega = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            omega[i * n + j] = gam.get(k, j, i).clone();
        }
    }
    let mut p = vec![R::zero(); n * n];
    for r in 0..n {
        let ark = a[r * n + k].clone();
        for i in 0..n {
            for j in 0..n {
                p[i * n + j] =
                    p[i * n + j].clone() + ark.clone() * gam_hat.get(r, j, i).clone();
            }
        }
    }
    // omega -= A^T P A
    subtract_congruence(n, &mut omega, &p, a);
    omega
}

/// `out -= B^T P B` for flat row-major `n x n` blocks.
fn subtract_congruence<R: Scalar>(n: usize, out: &mut [R], p: &[R], b: &[R]) {
    // tmp = P B
    let mut tmp = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = R::zero();
            for l in 0..n {
                acc = acc + p[i * n + l].clone() * b[l * n + j].clone();
            }
            tmp[i * n + j] = acc;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut acc = R::zero();
            for l in 0..n {
                acc = acc + b[l * n + i].clone() * tmp[l * n + j].clone();
            }
            out[i * n + j] = out[i * n + j].clone() - acc;
        }
    }
}

fn gamma_pair_f64(pair: &ManifoldPair, x: &[f64], x_hat: &[f64]) -> Result<(ChristoffelTensor, ChristoffelTensor)> {
    let g = match pair.m.gamma_closed(x) {
        Some(g) => g,
        None => crate::connection::christoffel_numeric_raw(&pair.m, x)?,
    };
    let gh = match pair.m_hat.gamma_closed(x_hat) {
        Some(g) => g,
        None => crate::connection::christoffel_numeric_raw(&pair.m_hat, x_hat)?,
    };
    Ok((g, gh))
}

/// Rotation-rate coefficients of the distribution along `e_k` at a state:
/// the skew matrix `Omega^(k)` with `Adot = A Omega^(k)` for unit control.
pub fn v_coefficients(pair: &ManifoldPair, state: &ConfigPoint, k: usize) -> Result<Matrix> {
    state.validate(pair)?;
    let n = pair.n();
    if k >= n {
        return Err(CoreError::BadInput(format!("control index {k} out of range")));
    }
    let (g, gh) = gamma_pair_f64(pair, &state.x, &state.x_hat)?;
    let omega = omega_from_gammas::<f64>(n, k, &g, &gh, state.a.as_slice());
    Matrix::from_vec(n, n, omega)
}

/// Normal analogue: `Omegaperp^(k)` with `Bdot = B Omegaperp^(k)`.
pub fn vperp_coefficients(
    pair: &ManifoldPair,
    state: &ExtConfigPoint,
    k: usize,
) -> Result<Matrix> {
    let nu = pair.codim()?;
    if nu == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let n = pair.n();
    if k >= n {
        return Err(CoreError::BadInput(format!("control index {k} out of range")));
    }
    let g = normal_christoffel_with(&pair.m, &state.base.x, FdOptions::default())?;
    let gh = normal_christoffel_with(&pair.m_hat, &state.base.x_hat, FdOptions::default())?;
    let omega = omega_perp(n, nu, &g, &gh, state.base.a.as_slice(), state.b.as_slice(), k);
    Matrix::from_vec(nu, nu, omega)
}

/// `Omegaperp^(k) = Sperp^(k) - sum_r a_{rk} B^T Shatperp^(r) B`.
fn omega_perp(
    n: usize,
    nu: usize,
    g: &ChristoffelTensor,
    gh: &ChristoffelTensor,
    a: &[f64],
    b: &[f64],
    k: usize,
) -> Vec<f64> {
    let mut omega = vec![0.0; nu * nu];
    for i in 0..nu {
        for j in 0..nu {
            omega[i * nu + j] = *g.get(k, j, i);
        }
    }
    let mut p = vec![0.0; nu * nu];
    for r in 0..n {
        let ark = a[r * n + k];
        if ark == 0.0 {
            continue;
        }
        for i in 0..nu {
            for j in 0..nu {
                p[i * nu + j] += ark * gh.get(r, j, i);
            }
        }
    }
    subtract_congruence::<f64>(nu, &mut omega, &p, b);
    omega
}

/// Assembles the value of distribution field `k` at a representation point
/// `[x | x_hat | A]`; frames and coefficients all evaluate at scalar type R.
fn field_value<R: Scalar>(
    m: &FramedChart,
    m_hat: &FramedChart,
    k: usize,
    p: &[R],
) -> Vec<R>
where
    FramedChart: ChartOps<R>,
{
    let n = m.n;
    let (mx, mh) = (m.m, m_hat.m);
    let x = &p[..mx];
    let x_hat = &p[mx..mx + mh];
    let a = &p[mx + mh..mx + mh + n * n];
    let frame = m.frame_s(x);
    let frame_hat = m_hat.frame_s(x_hat);
    let gam = m.gamma_s(x).expect("closed-form connection required");
    let gam_hat = m_hat.gamma_s(x_hat).expect("closed-form connection required");
    let omega = omega_from_gammas(n, k, &gam, &gam_hat, a);
    let mut out = Vec::with_capacity(p.len());
    out.extend(frame[k].iter().cloned());
    let mut xh_dot = vec![R::zero(); mh];
    for i in 0..n {
        let aik = a[i * n + k].clone();
        for (d, comp) in frame_hat[i].iter().enumerate() {
            xh_dot[d] = xh_dot[d].clone() + aik.clone() * comp.clone();
        }
    }
    out.extend(xh_dot);
    for i in 0..n {
        for j in 0..n {
            let mut acc = R::zero();
            for l in 0..n {
                acc = acc + a[i * n + l].clone() * omega[l * n + j].clone();
            }
            out.push(acc);
        }
    }
    out
}

/// The n generating fields of the rolling distribution on the configuration
/// space representation `[x | x_hat | A]` (plus `B` when extended). Field
/// `k` maps a state to `(e_k, sum_i a_{ik} ehat_i, A Omega^(k)[, B
/// Omegaperp^(k)])`; all formulas extend smoothly off the constraint set.
pub fn rolling_fields(pair: &ManifoldPair, extended: bool) -> Result<Vec<VectorFieldHandle>> {
    let n = pair.n();
    let jets_available = !extended
        && pair.m.has_closed_gamma()
        && pair.m_hat.has_closed_gamma();
    if extended {
        pair.codim()?;
    }
    let mut fields = Vec::with_capacity(n);
    for k in 0..n {
        let (m, mh) = (pair.m.clone(), pair.m_hat.clone());
        let pair_clone = ManifoldPair {
            m: m.clone(),
            m_hat: mh.clone(),
        };
        let eval: FieldEval = if extended {
            Arc::new(move |p: &[f64]| extended_field_value(&pair_clone, k, p))
        } else {
            let (m2, mh2) = (m.clone(), mh.clone());
            Arc::new(move |p: &[f64]| field_value::<f64>(&m2, &mh2, k, p))
        };
        let mut handle = VectorFieldHandle::new(format!("X{}", k + 1), eval);
        if jets_available {
            let (m3, mh3) = (m.clone(), mh.clone());
            handle = handle.with_jets(Arc::new(move |p: &[Jet]| {
                field_value::<Jet>(&m3, &mh3, k, p)
            }));
        }
        fields.push(handle);
    }
    Ok(fields)
}

fn extended_field_value(pair: &ManifoldPair, k: usize, p: &[f64]) -> Vec<f64> {
    let n = pair.n();
    let (mx, mh) = (pair.m.m, pair.m_hat.m);
    let nu = pair.m.ambient.as_ref().map(|a| a.codim).unwrap_or(0);
    let base = &p[..mx + mh + n * n];
    let b = &p[mx + mh + n * n..mx + mh + n * n + nu * nu];
    let mut out = field_value::<f64>(&pair.m, &pair.m_hat, k, base);
    let x = &p[..mx];
    let x_hat = &p[mx..mx + mh];
    let a = &p[mx + mh..mx + mh + n * n];
    let g = normal_christoffel_with(&pair.m, &pair.m.retract(x), FdOptions::default())
        .expect("normal coefficients");
    let gh =
        normal_christoffel_with(&pair.m_hat, &pair.m_hat.retract(x_hat), FdOptions::default())
            .expect("normal coefficients");
    let omega = omega_perp(n, nu, &g, &gh, a, b, k);
    for i in 0..nu {
        for j in 0..nu {
            let mut acc = 0.0;
            for l in 0..nu {
                acc += b[i * nu + l] * omega[l * nu + j];
            }
            out.push(acc);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Controls and integration
// ---------------------------------------------------------------------------

/// Control signal: coefficients of the rolling velocity in the frame {e_k}.
#[derive(Clone)]
pub enum Control {
    /// `values[i]` applies on `[knots[i], knots[i+1])`.
    PiecewiseConstant {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Func(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl Control {
    pub fn constant(u: Vec<f64>) -> Control {
        Control::PiecewiseConstant {
            knots: vec![0.0],
            values: vec![u],
        }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            Control::PiecewiseConstant { knots, values } => {
                let mut idx = 0;
                for (i, &k) in knots.iter().enumerate() {
                    if t >= k {
                        idx = i;
                    }
                }
                values[idx].clone()
            }
            Control::Func(f) => f(t),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self, Control::PiecewiseConstant { .. })
    }
}

/// Stepping scheme for [`integrate_rolling`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    /// Classical RK4 with post-step retraction.
    Rk4,
    /// Exact per-step exponential updates; available when the rolling chart
    /// is a group chart with constant coefficients and the still chart is
    /// flat with the standard frame.
    ExactExp,
}

struct PairCache {
    gamma: Option<ChristoffelTensor>,
    gamma_hat: Option<ChristoffelTensor>,
    gamma_perp: Option<ChristoffelTensor>,
    gamma_perp_hat: Option<ChristoffelTensor>,
}

impl PairCache {
    fn build(pair: &ManifoldPair, extended: bool, q0: &ConfigPoint) -> Result<Self> {
        let mut cache = PairCache {
            gamma: None,
            gamma_hat: None,
            gamma_perp: None,
            gamma_perp_hat: None,
        };
        if pair.m.constant_christoffel {
            cache.gamma = Some(gamma_pair_f64(pair, &q0.x, &q0.x_hat)?.0);
            if extended {
                cache.gamma_perp = Some(normal_christoffel_with(
                    &pair.m,
                    &q0.x,
                    FdOptions::default(),
                )?);
            }
        }
        if pair.m_hat.constant_christoffel {
            cache.gamma_hat = Some(gamma_pair_f64(pair, &q0.x, &q0.x_hat)?.1);
            if extended {
                cache.gamma_perp_hat = Some(normal_christoffel_with(
                    &pair.m_hat,
                    &q0.x_hat,
                    FdOptions::default(),
                )?);
            }
        }
        Ok(cache)
    }
}

/// Integrates the rolling distribution from `q0` under `control` for
/// `duration` with step `dt`. Retraction is applied to every block after
/// each step; leaving a chart aborts with the partial trajectory preserved
/// in the error path of [`integrate_rolling_partial`].
pub fn integrate_rolling(
    pair: &ManifoldPair,
    q0: &ConfigPoint,
    control: &Control,
    duration: f64,
    dt: f64,
    stepper: Stepper,
) -> Result<RollingTrajectory> {
    let (traj, err) = integrate_rolling_partial(pair, q0, None, control, duration, dt, stepper)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Extended (ambient) rolling: also carries the normal isometry `B`.
pub fn integrate_rolling_extended(
    pair: &ManifoldPair,
    q0: &ExtConfigPoint,
    control: &Control,
    duration: f64,
    dt: f64,
    stepper: Stepper,
) -> Result<RollingTrajectory> {
    let (traj, err) = integrate_rolling_partial(
        pair,
        &q0.base,
        Some(&q0.b),
        control,
        duration,
        dt,
        stepper,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`integrate_rolling`], but on mid-run failure (chart exit, drift)
/// returns the rows integrated so far together with the error.
#[allow(clippy::too_many_arguments)]
pub fn integrate_rolling_partial(
    pair: &ManifoldPair,
    q0: &ConfigPoint,
    b0: Option<&Matrix>,
    control: &Control,
    duration: f64,
    dt: f64,
    stepper: Stepper,
) -> Result<(RollingTrajectory, Option<CoreError>)> {
    q0.validate(pair)?;
    if duration <= 0.0 || dt <= 0.0 {
        return Err(CoreError::BadInput("duration and dt must be positive".into()));
    }
    let extended = b0.is_some();
    if let Some(b) = b0 {
        ExtConfigPoint::new(pair, q0.clone(), b.clone())?;
    }
    if stepper == Stepper::ExactExp {
        return exact_exp_rolling(pair, q0, b0, control, duration, dt);
    }
    let cache = PairCache::build(pair, extended, q0)?;
    let n = pair.n();
    let nu = if extended { pair.codim()? } else { 0 };
    let steps = (duration / dt).round().max(1.0) as usize;
    let h = duration / steps as f64;

    let mut t = 0.0;
    let mut state = q0.clone();
    let mut b = b0.cloned();
    let mut traj = RollingTrajectory {
        t: vec![0.0],
        states: vec![state.clone()],
        b: b.as_ref().map(|m| vec![m.clone()]),
        u: vec![control.at(0.0)],
    };

    let rate = |x: &[f64], xh: &[f64], a: &[f64], bb: Option<&[f64]>, u: &[f64]|
        -> Result<BlockRates> {
        let g = match &cache.gamma {
            Some(g) => g.clone(),
            None => gamma_pair_f64(pair, &pair.m.retract(x), xh)?.0,
        };
        let gh = match &cache.gamma_hat {
            Some(g) => g.clone(),
            None => {
                gamma_pair_f64(pair, x, &pair.m_hat.retract(xh))?.1
            }
        };
        let frame = pair.m.frame_unchecked(x);
        let frame_hat = pair.m_hat.frame_unchecked(xh);
        let mut dx = vec![0.0; x.len()];
        for (k, &uk) in u.iter().enumerate() {
            for (d, c) in frame[k].iter().enumerate() {
                dx[d] += uk * c;
            }
        }
        // u_hat = A u
        let mut u_hat = vec![0.0; n];
        for i in 0..n {
            u_hat[i] = (0..n).map(|k| a[i * n + k] * u[k]).sum();
        }
        let mut dxh = vec![0.0; xh.len()];
        for (i, &ui) in u_hat.iter().enumerate() {
            for (d, c) in frame_hat[i].iter().enumerate() {
                dxh[d] += ui * c;
            }
        }
        // Omega_total = U_S - A^T (sum_r uhat_r Shat^(r)) A
        let mut omega = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                omega[i * n + j] = (0..n).map(|k| u[k] * g.get(k, j, i)).sum();
            }
        }
        let mut p = vec![0.0; n * n];
        for r in 0..n {
            if u_hat[r] == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    p[i * n + j] += u_hat[r] * gh.get(r, j, i);
                }
            }
        }
        subtract_congruence::<f64>(n, &mut omega, &p, a);
        let mut da = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                da[i * n + j] = (0..n).map(|l| a[i * n + l] * omega[l * n + j]).sum();
            }
        }
        let db = match bb {
            None => None,
            Some(bb) => {
                let gp = match &cache.gamma_perp {
                    Some(g) => g.clone(),
                    None => normal_christoffel_with(
                        &pair.m,
                        &pair.m.retract(x),
                        FdOptions::default(),
                    )?,
                };
                let gph = match &cache.gamma_perp_hat {
                    Some(g) => g.clone(),
                    None => normal_christoffel_with(
                        &pair.m_hat,
                        &pair.m_hat.retract(xh),
                        FdOptions::default(),
                    )?,
                };
                let mut omega_p = vec![0.0; nu * nu];
                for i in 0..nu {
                    for j in 0..nu {
                        omega_p[i * nu + j] = (0..n).map(|k| u[k] * gp.get(k, j, i)).sum();
                    }
                }
                let mut pp = vec![0.0; nu * nu];
                for r in 0..n {
                    if u_hat[r] == 0.0 {
                        continue;
                    }
                    for i in 0..nu {
                        for j in 0..nu {
                            pp[i * nu + j] += u_hat[r] * gph.get(r, j, i);
                        }
                    }
                }
                subtract_congruence::<f64>(nu, &mut omega_p, &pp, bb);
                let mut db = vec![0.0; nu * nu];
                for i in 0..nu {
                    for j in 0..nu {
                        db[i * nu + j] =
                            (0..nu).map(|l| bb[i * nu + l] * omega_p[l * nu + j]).sum();
                    }
                }
                Some(db)
            }
        };
        Ok((dx, dxh, da, db))
    };

    for _ in 0..steps {
        let u_mid = control.at(t + 0.5 * h);
        let u_start = control.at(t);
        let u_end = control.at(t + h);
        let x0 = state.x.clone();
        let xh0 = state.x_hat.clone();
        let a0 = state.a.as_slice().to_vec();
        let b0v = b.as_ref().map(|m| m.as_slice().to_vec());

        let step_result = (|| -> Result<BlockRates> {
            let (kx1, kh1, ka1, kb1) = rate(&x0, &xh0, &a0, b0v.as_deref(), &u_start)?;
            let x1 = add_scaled(&x0, &kx1, 0.5 * h);
            let xh1 = add_scaled(&xh0, &kh1, 0.5 * h);
            let a1 = add_scaled(&a0, &ka1, 0.5 * h);
            let b1 = zip_add(&b0v, &kb1, 0.5 * h);
            let (kx2, kh2, ka2, kb2) = rate(&x1, &xh1, &a1, b1.as_deref(), &u_mid)?;
            let x2 = add_scaled(&x0, &kx2, 0.5 * h);
            let xh2 = add_scaled(&xh0, &kh2, 0.5 * h);
            let a2 = add_scaled(&a0, &ka2, 0.5 * h);
            let b2 = zip_add(&b0v, &kb2, 0.5 * h);
            let (kx3, kh3, ka3, kb3) = rate(&x2, &xh2, &a2, b2.as_deref(), &u_mid)?;
            let x3 = add_scaled(&x0, &kx3, h);
            let xh3 = add_scaled(&xh0, &kh3, h);
            let a3 = add_scaled(&a0, &ka3, h);
            let b3 = zip_add(&b0v, &kb3, h);
            let (kx4, kh4, ka4, kb4) = rate(&x3, &xh3, &a3, b3.as_deref(), &u_end)?;
            let combine = |f: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| {
                f.iter()
                    .enumerate()
                    .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect::<Vec<f64>>()
            };
            let nx = combine(&x0, &kx1, &kx2, &kx3, &kx4);
            let nxh = combine(&xh0, &kh1, &kh2, &kh3, &kh4);
            let na = combine(&a0, &ka1, &ka2, &ka3, &ka4);
            let nb = match (&b0v, &kb1, &kb2, &kb3, &kb4) {
                (Some(b0v), Some(k1), Some(k2), Some(k3), Some(k4)) => {
                    Some(combine(b0v, k1, k2, k3, k4))
                }
                _ => None,
            };
            Ok((nx, nxh, na, nb))
        })();

        let (nx, nxh, na, nb) = match step_result {
            Ok(v) => v,
            Err(e) => return Ok((traj, Some(e))),
        };

        // Retract every block; abort on excessive drift or chart exit.
        let finish = (|| -> Result<(ConfigPoint, Option<Matrix>)> {
            let x = pair.m.retract(&nx);
            pair.m.check_domain(&x)?;
            let xh = pair.m_hat.retract(&nxh);
            pair.m_hat.check_domain(&xh)?;
            let a = project_to_so(&Matrix::from_vec(n, n, na)?)?;
            let b_next = match nb {
                Some(nb) => Some(if nu > 0 {
                    project_to_so(&Matrix::from_vec(nu, nu, nb)?)?
                } else {
                    Matrix::zeros(0, 0)
                }),
                None => None,
            };
            Ok((ConfigPoint { x, x_hat: xh, a }, b_next))
        })();
        let (next_state, next_b) = match finish {
            Ok(v) => v,
            Err(e) => return Ok((traj, Some(e))),
        };

        t += h;
        state = next_state;
        b = next_b;
        traj.t.push(t);
        traj.states.push(state.clone());
        traj.u.push(control.at(t));
        if let (Some(list), Some(bm)) = (traj.b.as_mut(), b.as_ref()) {
            list.push(bm.clone());
        }
    }
    Ok((traj, None))
}

fn add_scaled(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

fn zip_add(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>, s: f64) -> Option<Vec<f64>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(add_scaled(a, b, s)),
        _ => None,
    }
}

/// `int_0^h exp(s M) ds` together with `exp(h M)`, by a truncated series
/// with interval doubling.
fn exp_and_integral(m: &Matrix, h: f64) -> (Matrix, Matrix) {
    let n = m.nrows();
    let mut doublings = 0u32;
    let mut hh = h;
    while hh.abs() * m.max_abs() * n as f64 > 0.25 && doublings < 40 {
        hh /= 2.0;
        doublings += 1;
    }
    let mut exp = Matrix::identity(n);
    let mut phi = Matrix::zeros(n, n);
    // exp(hh M) = sum (hh M)^k / k!, phi = int = hh sum (hh M)^k / (k+1)!.
    let mut term = Matrix::identity(n);
    for i in 0..n {
        phi[(i, i)] = hh;
    }
    let mut phi_term = Matrix::identity(n).scale(hh);
    for k in 1..=14 {
        term = term.matmul(m).scale(hh / k as f64);
        exp = exp.add(&term);
        phi_term = phi_term.matmul(m).scale(hh / (k + 1) as f64);
        phi = phi.add(&phi_term);
    }
    for _ in 0..doublings {
        // Phi(2t) = (I + exp(t M)) Phi(t); exp(2t M) = exp(t M)^2.
        let grown = Matrix::identity(n).add(&exp).matmul(&phi);
        exp = exp.matmul(&exp);
        phi = grown;
    }
    (exp, phi)
}

/// Exact exponential stepping for constant-coefficient pairs whose still
/// side is flat with the standard frame.
fn exact_exp_rolling(
    pair: &ManifoldPair,
    q0: &ConfigPoint,
    b0: Option<&Matrix>,
    control: &Control,
    duration: f64,
    dt: f64,
) -> Result<(RollingTrajectory, Option<CoreError>)> {
    let n = pair.n();
    let supported_m = matches!(pair.m.kind, ChartKind::Se3 | ChartKind::Euclidean);
    let supported_hat = matches!(pair.m_hat.kind, ChartKind::Euclidean | ChartKind::Se3Flat);
    if !supported_m || !supported_hat || !pair.m.constant_christoffel {
        return Err(CoreError::BadInput(format!(
            "exact stepper unsupported for pair ({}, {})",
            pair.m.name, pair.m_hat.name
        )));
    }
    if !control.is_piecewise_constant() {
        return Err(CoreError::BadInput(
            "exact stepper needs a piecewise-constant control".into(),
        ));
    }
    let gh = pair
        .m_hat
        .gamma_closed(&q0.x_hat)
        .ok_or_else(|| CoreError::BadInput("still chart must carry closed coefficients".into()))?;
    if gh.max_abs() != 0.0 {
        return Err(CoreError::BadInput(
            "exact stepper needs a flat still chart".into(),
        ));
    }
    let extended = b0.is_some();
    let nu = if extended { pair.codim()? } else { 0 };
    let gam = pair
        .m
        .gamma_closed(&q0.x)
        .ok_or_else(|| CoreError::BadInput("rolling chart must carry closed coefficients".into()))?;
    let gam_perp = if extended {
        Some(normal_christoffel_with(&pair.m, &q0.x, FdOptions::default())?)
    } else {
        None
    };

    let steps = (duration / dt).round().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut state = q0.clone();
    let mut b = b0.cloned();
    let mut traj = RollingTrajectory {
        t: vec![0.0],
        states: vec![state.clone()],
        b: b.as_ref().map(|m| vec![m.clone()]),
        u: vec![control.at(0.0)],
    };
    let mut t = 0.0;
    for _ in 0..steps {
        let u = control.at(t + 0.5 * h);
        // U_S with (i,j) entry sum_k u_k Gamma(k, j, i).
        let mut us = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                us[(i, j)] = (0..n).map(|k| u[k] * gam.get(k, j, i)).sum();
            }
        }
        let (exp_us, phi_us) = exp_and_integral(&us, h);
        // x_hat advance: x_hat += A Phi u (standard still frame).
        let shift = state.a.matmul(&phi_us).matvec(&u);
        for (d, s) in state.x_hat.iter_mut().zip(&shift) {
            *d += s;
        }
        // Rolling-side group step.
        match pair.m.kind {
            ChartKind::Euclidean => {
                for (d, &uk) in state.x.iter_mut().zip(u.iter()) {
                    *d += h * uk;
                }
            }
            ChartKind::Se3 => {
                let inv_s2 = 1.0 / crate::chart::SQRT2;
                let mut w = Matrix::zeros(3, 3);
                w[(0, 1)] = inv_s2 * u[0];
                w[(1, 0)] = -inv_s2 * u[0];
                w[(0, 2)] = inv_s2 * u[1];
                w[(2, 0)] = -inv_s2 * u[1];
                w[(1, 2)] = inv_s2 * u[2];
                w[(2, 1)] = -inv_s2 * u[2];
                let (exp_w, phi_w) = exp_and_integral(&w, h);
                let c = Matrix::from_vec(3, 3, state.x[..9].to_vec())?;
                let c_next = c.matmul(&exp_w);
                let v = [u[3], u[4], u[5]];
                let shift = c.matmul(&phi_w).matvec(&v);
                let mut x = c_next.as_slice().to_vec();
                x.push(state.x[9] + shift[0]);
                x.push(state.x[10] + shift[1]);
                x.push(state.x[11] + shift[2]);
                state.x = x;
            }
            _ => unreachable!(),
        }
        state.a = state.a.matmul(&exp_us);
        if let (Some(bm), Some(gp)) = (b.as_mut(), gam_perp.as_ref()) {
            let mut usp = Matrix::zeros(nu, nu);
            for i in 0..nu {
                for j in 0..nu {
                    usp[(i, j)] = (0..n).map(|k| u[k] * gp.get(k, j, i)).sum();
                }
            }
            *bm = bm.matmul(&exp_skew(&usp.scale(h))?);
        }
        t += h;
        if let Err(e) = pair.m.check_domain(&state.x) {
            return Ok((traj, Some(e)));
        }
        if let Err(e) = pair.m_hat.check_domain(&state.x_hat) {
            return Ok((traj, Some(e)));
        }
        traj.t.push(t);
        traj.states.push(state.clone());
        traj.u.push(control.at(t));
        if let (Some(list), Some(bm)) = (traj.b.as_mut(), b.as_ref()) {
            list.push(bm.clone());
        }
    }
    Ok((traj, None))
}

// ---------------------------------------------------------------------------
// Residuals and invariant measurements
// ---------------------------------------------------------------------------

/// Worst violation of the no-slip condition over the interior grid:
/// `max_i || d/dt x_hat - Ehat(x_hat) A u ||` with differenced still-side
/// velocities. Nodes whose stencil straddles a control jump are skipped.
pub fn noslip_residual(pair: &ManifoldPair, traj: &RollingTrajectory) -> Result<f64> {
    if traj.t.len() < 3 {
        return Err(CoreError::BadInput("trajectory too short for residuals".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 1..traj.t.len() - 1 {
        let du: f64 = traj.u[i - 1]
            .iter()
            .zip(&traj.u[i + 1])
            .map(|(a, b)| (a - b).abs())
            .sum();
        if du > 1e-12 {
            continue;
        }
        let dt = traj.t[i + 1] - traj.t[i - 1];
        let frame_hat = pair.m_hat.frame_unchecked(&traj.states[i].x_hat);
        let u_hat = traj.states[i].a.matvec(&traj.u[i]);
        let mut res = 0.0f64;
        for d in 0..traj.states[i].x_hat.len() {
            let fd = (traj.states[i + 1].x_hat[d] - traj.states[i - 1].x_hat[d]) / dt;
            let model: f64 = (0..pair.n()).map(|k| u_hat[k] * frame_hat[k][d]).sum();
            res += (fd - model) * (fd - model);
        }
        worst = worst.max(res.sqrt());
    }
    Ok(worst)
}

/// Re-expresses the isometries in parallel frames along both contact curves:
/// `A_par(t) = That(t)^T A(t) T(t)` (and likewise `B_par`). For a true
/// rolling these are constant.
pub fn coefficient_paths(
    pair: &ManifoldPair,
    traj: &RollingTrajectory,
) -> Result<(Vec<Matrix>, Option<Vec<Matrix>>)> {
    let curve = traj.x_curve()?;
    let curve_hat = traj.x_hat_curve()?;
    let trans = transport_frame(&pair.m, &curve)?;
    let trans_hat = transport_frame(&pair.m_hat, &curve_hat)?;
    let mut a_par = Vec::with_capacity(traj.t.len());
    for i in 0..traj.t.len() {
        a_par.push(trans_hat[i].transpose().matmul(&traj.states[i].a).matmul(&trans[i]));
    }
    let b_par = match &traj.b {
        None => None,
        Some(bs) => {
            let nu = pair.codim()?;
            if nu <= 1 {
                None
            } else {
                let nt = transport_normal_frame(&pair.m, &curve)?;
                let nt_hat = transport_normal_frame(&pair.m_hat, &curve_hat)?;
                let mut out = Vec::with_capacity(traj.t.len());
                for i in 0..traj.t.len() {
                    out.push(nt_hat[i].transpose().matmul(&bs[i]).matmul(&nt[i]));
                }
                Some(out)
            }
        }
    };
    Ok((a_par, b_par))
}

/// Max deviation of the parallel-frame coefficient matrices from their
/// initial values (tangential and, when present, normal part).
pub fn frame_coefficient_drift(pair: &ManifoldPair, traj: &RollingTrajectory) -> Result<f64> {
    let (a_par, b_par) = coefficient_paths(pair, traj)?;
    let mut worst: f64 = 0.0;
    for m in &a_par {
        worst = worst.max(m.sub(&a_par[0]).max_abs());
    }
    if let Some(bs) = b_par {
        for m in &bs {
            worst = worst.max(m.sub(&bs[0]).max_abs());
        }
    }
    Ok(worst)
}

/// Residual report of the rolling conditions along a trajectory.
#[derive(Clone, Debug)]
pub struct RollingConditionReport {
    pub noslip: f64,
    pub notwist_tangential: f64,
    /// `None` when the normal condition is vacuous (no extension, or
    /// codimension at most one).
    pub notwist_normal: Option<f64>,
    pub orientation: bool,
}

/// Checks the rolling conditions directly: no-slip by differenced still
/// velocities, no-twist by verifying that images of parallel fields remain
/// parallel (the drift computation is the independent cross-check), and
/// orientation by determinants.
pub fn verify_rolling_conditions(
    pair: &ManifoldPair,
    traj: &RollingTrajectory,
) -> Result<RollingConditionReport> {
    let noslip = noslip_residual(pair, traj)?;
    let curve = traj.x_curve()?;
    let trans = transport_frame(&pair.m, &curve)?;
    let n = pair.n();
    // w_j(t) = A(t) T(t) col_j must be parallel along x_hat:
    // max | d/dt w_j + sum_k uhat_k Shat^(k) w_j |.
    let mut w: Vec<Vec<Vec<f64>>> = Vec::with_capacity(traj.t.len());
    for i in 0..traj.t.len() {
        let at = traj.states[i].a.matmul(&trans[i]);
        w.push((0..n)
            .map(|j| (0..n).map(|r| at[(r, j)]).collect())
            .collect());
    }
    let mut notwist_tan: f64 = 0.0;
    for i in 1..traj.t.len() - 1 {
        let gh = match pair.m_hat.gamma_closed(&traj.states[i].x_hat) {
            Some(g) => g,
            None => crate::connection::christoffel_numeric_raw(&pair.m_hat, &traj.states[i].x_hat)?,
        };
        let u_hat = traj.states[i].a.matvec(&traj.u[i]);
        let dt = traj.t[i + 1] - traj.t[i - 1];
        for j in 0..n {
            for c in 0..n {
                let fd = (w[i + 1][j][c] - w[i - 1][j][c]) / dt;
                let mut conn = 0.0;
                for (k, &uk) in u_hat.iter().enumerate() {
                    for (d, &wd) in w[i][j].iter().enumerate() {
                        conn += uk * gh.get(k, d, c) * wd;
                    }
                }
                notwist_tan = notwist_tan.max((fd + conn).abs());
            }
        }
    }
    // Normal part, when extended and the codimension exceeds one.
    let notwist_normal = match &traj.b {
        None => None,
        Some(bs) => {
            let nu = pair.codim()?;
            if nu <= 1 {
                None
            } else {
                let ntrans = transport_normal_frame(&pair.m, &curve)?;
                let mut wn: Vec<Matrix> = Vec::with_capacity(traj.t.len());
                for i in 0..traj.t.len() {
                    wn.push(bs[i].matmul(&ntrans[i]));
                }
                let mut worst: f64 = 0.0;
                for i in 1..traj.t.len() - 1 {
                    let gph = normal_christoffel_with(
                        &pair.m_hat,
                        &traj.states[i].x_hat,
                        FdOptions::default(),
                    )?;
                    let u_hat = traj.states[i].a.matvec(&traj.u[i]);
                    let dt = traj.t[i + 1] - traj.t[i - 1];
                    for j in 0..nu {
                        for c in 0..nu {
                            let fd = (wn[i + 1][(c, j)] - wn[i - 1][(c, j)]) / dt;
                            let mut conn = 0.0;
                            for (k, &uk) in u_hat.iter().enumerate() {
                                for d in 0..nu {
                                    conn += uk * gph.get(k, d, c) * wn[i][(d, j)];
                                }
                            }
                            worst = worst.max((fd + conn).abs());
                        }
                    }
                }
                Some(worst)
            }
        }
    };
    let mut orientation = true;
    for s in &traj.states {
        if (s.a.determinant() - 1.0).abs() > 1e-6 {
            orientation = false;
        }
    }
    if let Some(bs) = &traj.b {
        for b in bs {
            if b.nrows() > 0 && (b.determinant() - 1.0).abs() > 1e-6 {
                orientation = false;
            }
        }
    }
    Ok(RollingConditionReport {
        noslip,
        notwist_tangential: notwist_tan,
        notwist_normal,
        orientation,
    })
}

/// Arc length of a sampled curve via cubic segments and three-point Gauss
/// quadrature (independent of stored controls).
pub fn curve_length(curve: &SampledCurve) -> f64 {
    let v = curve.velocities();
    let mut total = 0.0;
    // Gauss-Legendre nodes on [0, 1].
    let nodes = [0.5 - (0.15f64).sqrt(), 0.5, 0.5 + (0.15f64).sqrt()];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    for i in 0..curve.t.len() - 1 {
        let h = curve.t[i + 1] - curve.t[i];
        for (s, wgt) in nodes.iter().zip(weights) {
            // Hermite derivative at parameter s.
            let (d00, d10, d01, d11) = (
                6.0 * s * s - 6.0 * s,
                3.0 * s * s - 4.0 * s + 1.0,
                -6.0 * s * s + 6.0 * s,
                3.0 * s * s - 2.0 * s,
            );
            let speed: f64 = (0..curve.x[0].len())
                .map(|d| {
                    let dp = d00 * curve.x[i][d]
                        + d10 * h * v[i][d]
                        + d01 * curve.x[i + 1][d]
                        + d11 * h * v[i + 1][d];
                    (dp / h) * (dp / h)
                })
                .sum::<f64>()
                .sqrt();
            total += wgt * speed * h;
        }
    }
    total
}

/// Dimension of the space of parallel tangent fields along a curve that stay
/// orthogonal to its velocity wherever the velocity is nonzero.
pub fn rolling_freedom(chart: &FramedChart, curve: &SampledCurve) -> Result<usize> {
    let n = chart.n;
    let u = curve.frame_coefficients(chart)?;
    let trans = transport_frame(chart, curve)?;
    let mut constraints: Vec<Vec<f64>> = Vec::new();
    for i in 0..curve.t.len() {
        let speed: f64 = u[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        if speed < 1e-9 {
            // Velocity undefined or vanishing: no constraint here.
            continue;
        }
        // <sum_j z_j p_j(t), xdot> = z . (T^T u); collect the row T^T u.
        constraints.push(trans[i].transpose().matvec(&u[i]));
    }
    if constraints.is_empty() {
        return Ok(n);
    }
    let rank = rank_of_span(&constraints, RankPolicy::default())?;
    Ok(n - rank)
}

/// Extends an intrinsic rolling to an ambient one: constructs `B(t)` whose
/// parallel-frame coefficient matrix is constantly `b0`. Unique up to the
/// choice of `b0`.
pub fn extend_to_extrinsic(
    pair: &ManifoldPair,
    traj: &RollingTrajectory,
    b0: &Matrix,
) -> Result<RollingTrajectory> {
    let nu = pair.codim()?;
    ExtConfigPoint::new(pair, traj.states[0].clone(), b0.clone())?;
    if nu == 0 {
        let mut out = traj.clone();
        out.b = Some(vec![Matrix::zeros(0, 0); traj.t.len()]);
        return Ok(out);
    }
    let curve = traj.x_curve()?;
    let curve_hat = traj.x_hat_curve()?;
    let interp = curve.interpolator();
    let interp_hat = curve_hat.interpolator();
    let n = pair.n();
    let const_gp = if pair.m.constant_christoffel {
        Some(normal_christoffel_with(&pair.m, &traj.states[0].x, FdOptions::default())?)
    } else {
        None
    };
    let const_gph = if pair.m_hat.constant_christoffel {
        Some(normal_christoffel_with(
            &pair.m_hat,
            &traj.states[0].x_hat,
            FdOptions::default(),
        )?)
    } else {
        None
    };
    let rate = |x: &[f64], xh: &[f64], a: &Matrix, u: &[f64], b: &[f64]| -> Result<Vec<f64>> {
        let gp = match &const_gp {
            Some(g) => g.clone(),
            None => normal_christoffel_with(&pair.m, &pair.m.retract(x), FdOptions::default())?,
        };
        let gph = match &const_gph {
            Some(g) => g.clone(),
            None => normal_christoffel_with(
                &pair.m_hat,
                &pair.m_hat.retract(xh),
                FdOptions::default(),
            )?,
        };
        let u_hat = a.matvec(u);
        let mut omega = vec![0.0; nu * nu];
        for i in 0..nu {
            for j in 0..nu {
                omega[i * nu + j] = (0..n).map(|k| u[k] * gp.get(k, j, i)).sum();
            }
        }
        let mut p = vec![0.0; nu * nu];
        for r in 0..n {
            if u_hat[r] == 0.0 {
                continue;
            }
            for i in 0..nu {
                for j in 0..nu {
                    p[i * nu + j] += u_hat[r] * gph.get(r, j, i);
                }
            }
        }
        subtract_congruence::<f64>(nu, &mut omega, &p, b);
        let mut db = vec![0.0; nu * nu];
        for i in 0..nu {
            for j in 0..nu {
                db[i * nu + j] = (0..nu).map(|l| b[i * nu + l] * omega[l * nu + j]).sum();
            }
        }
        Ok(db)
    };
    let mut b = b0.clone();
    let mut bs = vec![b.clone()];
    for i in 0..traj.t.len() - 1 {
        let h = traj.t[i + 1] - traj.t[i];
        let tm = 0.5 * (traj.t[i] + traj.t[i + 1]);
        let xm = pair.m.retract(&interp.position(tm));
        let xhm = pair.m_hat.retract(&interp_hat.position(tm));
        let am_raw = traj.states[i].a.add(&traj.states[i + 1].a).scale(0.5);
        let am = project_to_so(&am_raw)?;
        let um: Vec<f64> = traj.u[i]
            .iter()
            .zip(&traj.u[i + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let bv = b.as_slice().to_vec();
        let k1 = rate(&traj.states[i].x, &traj.states[i].x_hat, &traj.states[i].a, &traj.u[i], &bv)?;
        let b2 = add_scaled(&bv, &k1, 0.5 * h);
        let k2 = rate(&xm, &xhm, &am, &um, &b2)?;
        let b3 = add_scaled(&bv, &k2, 0.5 * h);
        let k3 = rate(&xm, &xhm, &am, &um, &b3)?;
        let b4 = add_scaled(&bv, &k3, h);
        let k4 = rate(
            &traj.states[i + 1].x,
            &traj.states[i + 1].x_hat,
            &traj.states[i + 1].a,
            &traj.u[i + 1],
            &b4,
        )?;
        let mut next: Vec<f64> = bv
            .iter()
            .enumerate()
            .map(|(d, v)| v + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]))
            .collect();
        let m = project_to_so(&Matrix::from_vec(nu, nu, std::mem::take(&mut next))?)?;
        b = m;
        bs.push(b.clone());
    }
    let mut out = traj.clone();
    out.b = Some(bs);
    Ok(out)
}

/// Rebuilds the ambient isometry `(Abar, rbar)` of a configuration: `Abar`
/// maps the tangent frame of the rolling side through `A` and the normal
/// frame through `B`; `rbar` is fixed by matching the embedded contact
/// points.
pub fn reconstruct_ambient_isometry(
    pair: &ManifoldPair,
    state: &ExtConfigPoint,
) -> Result<(Matrix, Vec<f64>)> {
    let amb = pair.m.ambient()?;
    let amb_hat = pair.m_hat.ambient()?;
    if amb.dim != amb_hat.dim {
        return Err(CoreError::Dimension(format!(
            "ambient dimensions differ: {} vs {}",
            amb.dim, amb_hat.dim
        )));
    }
    state.base.validate(pair)?;
    let n = pair.n();
    let nu = pair.codim()?;
    let big_n = amb.dim;
    let p = (amb.embedding)(&state.base.x);
    let p_hat = (amb_hat.embedding)(&state.base.x_hat);
    let mut f = Matrix::zeros(big_n, n + nu);
    let mut f_hat = Matrix::zeros(big_n, n + nu);
    let tf = (amb.frame_ambient)(&p);
    let nf = (amb.normal_frame)(&p);
    let tf_hat = (amb_hat.frame_ambient)(&p_hat);
    let nf_hat = (amb_hat.normal_frame)(&p_hat);
    for j in 0..n {
        for r in 0..big_n {
            f[(r, j)] = tf[j][r];
            f_hat[(r, j)] = tf_hat[j][r];
        }
    }
    for j in 0..nu {
        for r in 0..big_n {
            f[(r, n + j)] = nf[j][r];
            f_hat[(r, n + j)] = nf_hat[j][r];
        }
    }
    if n + nu != big_n {
        return Err(CoreError::Dimension(
            "tangent plus normal frames must fill the ambient space".into(),
        ));
    }
    // Abar = Fhat blockdiag(A, B) F^T.
    let mut block = Matrix::zeros(big_n, big_n);
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] = state.base.a[(i, j)];
        }
    }
    for i in 0..nu {
        for j in 0..nu {
            block[(n + i, n + j)] = state.b[(i, j)];
        }
    }
    let abar = f_hat.matmul(&block).matmul(&f.transpose());
    let defect = abar.orthogonality_defect();
    if defect > SO_TOL {
        return Err(CoreError::DriftTooLarge {
            drift: defect,
            limit: SO_TOL,
        });
    }
    let rbar: Vec<f64> = p_hat
        .iter()
        .zip(abar.matvec(&p))
        .map(|(a, b)| a - b)
        .collect();
    Ok((abar, rbar))
}
