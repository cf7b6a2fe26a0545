//! Framed-chart representation of Riemannian manifolds.
//!
//! A manifold lives in representation coordinates `R^m` carrying a constraint
//! set, an orthonormal frame field, a retraction back onto the constraint
//! set, and (optionally) an isometric embedding into an ambient `R^N` with
//! tangent and normal frames. Frames and closed-form connection coefficients
//! are written generically over [`Scalar`] so the Lie-bracket machinery can
//! differentiate through them exactly.
//!
//! Built-ins: Euclidean space, the unit n-sphere in a single hemisphere
//! chart, the rigid-motion group of 3-space with a left-invariant metric, its
//! Lie algebra as flat `R^6` (both with the 4x4-matrix embedding into
//! `R^16`), a planar circle, a straight line and a spiral-embedded line (the
//! one-dimensional rolling examples), and a flat cylinder chart.

use crate::error::{CoreError, Result};
use crate::linalg::project_to_so;
use crate::num::{Jet, Scalar};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Constraint-violation tolerance before a hard domain error. Retraction
/// after every integrator step keeps drift far below this.
pub const EPS_DOMAIN: f64 = 1e-6;

/// Connection coefficients in an orthonormal frame:
/// `gamma(k, j, i) = <D_{e_k} e_j, e_i>`, antisymmetric in `(j, i)`.
///
/// `dirs` is the number of differentiation directions (the manifold
/// dimension); `dim` is the frame size (equal to `dirs` for the tangential
/// connection, the codimension for the normal one).
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel<R> {
    pub dirs: usize,
    pub dim: usize,
    data: Vec<R>,
}

pub type ChristoffelTensor = Christoffel<f64>;

impl<R: Scalar> Christoffel<R> {
    pub fn zeros(dirs: usize, dim: usize) -> Self {
        Christoffel {
            dirs,
            dim,
            data: vec![R::zero(); dirs * dim * dim],
        }
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize, i: usize) -> &R {
        &self.data[(k * self.dim + j) * self.dim + i]
    }

    #[inline]
    pub fn set(&mut self, k: usize, j: usize, i: usize, v: R) {
        self.data[(k * self.dim + j) * self.dim + i] = v;
    }
}

impl ChristoffelTensor {
    /// Worst violation of `gamma(k,j,i) + gamma(k,i,j) = 0`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.dirs {
            for j in 0..self.dim {
                for i in 0..self.dim {
                    worst = worst.max((self.get(k, j, i) + self.get(k, i, j)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &ChristoffelTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

pub type FrameEval<R> = Box<dyn Fn(&[R]) -> Vec<Vec<R>> + Send + Sync>;
pub type GammaEval<R> = Box<dyn Fn(&[R]) -> Christoffel<R> + Send + Sync>;
pub type AmbientEval = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;
pub type PointMap = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type DomainTest = Box<dyn Fn(&[f64]) -> std::result::Result<(), String> + Send + Sync>;

/// Embedding data attached to a chart: an isometric embedding into `R^N`
/// with tangent and normal frame fields defined on a neighborhood of the
/// image (they take the ambient point, so they can be differenced).
pub struct AmbientData {
    /// Ambient dimension N.
    pub dim: usize,
    /// Codimension (number of normal frame fields).
    pub codim: usize,
    pub embedding: PointMap,
    pub frame_ambient: AmbientEval,
    pub normal_frame: AmbientEval,
}


/// Built-in chart identity, used for exact-stepper dispatch and scenario
/// names. User charts are `Custom`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Euclidean,
    Sphere,
    Se3,
    Se3Flat,
    Circle,
    Line,
    Spiral,
    Cylinder,
    Custom,
}

/// A manifold presented by an orthonormal frame field in representation
/// coordinates. Immutable after construction; evaluations are pure.
pub struct FramedChart {
    pub name: String,
    pub kind: ChartKind,
    /// Intrinsic dimension.
    pub n: usize,
    /// Representation dimension (m >= n).
    pub m: usize,
    /// Canonical base point used by scenario defaults.
    pub base_point: Vec<f64>,
    /// True when the closed-form connection coefficients do not depend on
    /// the point (flat or left-invariant charts); enables exact exponential
    /// stepping.
    pub constant_christoffel: bool,
    frame_f64: FrameEval<f64>,
    frame_jet: FrameEval<Jet>,
    gamma_f64: Option<GammaEval<f64>>,
    gamma_jet: Option<GammaEval<Jet>>,
    domain_fn: DomainTest,
    retraction_fn: PointMap,
    pub ambient: Option<AmbientData>,
}

impl FramedChart {
    /// Builds a user-defined chart from frame evaluators (one per scalar
    /// type; write the formula once generically and instantiate it twice).
    /// No closed-form connection and no embedding are attached; chain
    /// [`FramedChart::with_gamma`] / [`FramedChart::with_ambient`] as needed.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        n: usize,
        m: usize,
        base_point: Vec<f64>,
        frame_f64: FrameEval<f64>,
        frame_jet: FrameEval<Jet>,
        domain_fn: DomainTest,
        retraction_fn: PointMap,
    ) -> Self {
        FramedChart {
            name: name.into(),
            kind: ChartKind::Custom,
            n,
            m,
            base_point,
            constant_christoffel: false,
            frame_f64,
            frame_jet,
            gamma_f64: None,
            gamma_jet: None,
            domain_fn,
            retraction_fn,
            ambient: None,
        }
    }

    pub fn with_gamma(mut self, f: GammaEval<f64>, fj: GammaEval<Jet>) -> Self {
        self.gamma_f64 = Some(f);
        self.gamma_jet = Some(fj);
        self
    }

    pub fn with_ambient(mut self, ambient: AmbientData) -> Self {
        self.ambient = Some(ambient);
        self
    }

    pub fn with_constant_christoffel(mut self, yes: bool) -> Self {
        self.constant_christoffel = yes;
        self
    }

    /// Frame fields at `x` (domain-checked).
    pub fn frame(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_domain(x)?;
        Ok((self.frame_f64)(x))
    }

    /// Frame fields without the domain check, for use on the smooth
    /// extension off the constraint set (finite differences, brackets).
    pub fn frame_unchecked(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (self.frame_f64)(x)
    }

    pub fn frame_jets(&self, x: &[Jet]) -> Vec<Vec<Jet>> {
        (self.frame_jet)(x)
    }

    pub fn gamma_closed(&self, x: &[f64]) -> Option<ChristoffelTensor> {
        self.gamma_f64.as_ref().map(|f| f(x))
    }

    pub fn gamma_closed_jets(&self, x: &[Jet]) -> Option<Christoffel<Jet>> {
        self.gamma_jet.as_ref().map(|f| f(x))
    }

    pub fn has_closed_gamma(&self) -> bool {
        self.gamma_f64.is_some()
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(CoreError::Dimension(format!(
                "chart `{}` expects {} coordinates, got {}",
                self.name,
                self.m,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!("point on `{}`", self.name)));
        }
        (self.domain_fn)(x).map_err(|detail| CoreError::DomainExit {
            chart: self.name.clone(),
            detail,
        })
    }

    pub fn retract(&self, x: &[f64]) -> Vec<f64> {
        (self.retraction_fn)(x)
    }

    pub fn ambient(&self) -> Result<&AmbientData> {
        self.ambient
            .as_ref()
            .ok_or_else(|| CoreError::MissingAmbient(self.name.clone()))
    }
}

/// Frame and closed-form connection evaluation at a statically chosen scalar
/// type; lets rolling-field assembly be written once for both `f64` and jets.
pub trait ChartOps<R: Scalar> {
    fn frame_s(&self, x: &[R]) -> Vec<Vec<R>>;
    fn gamma_s(&self, x: &[R]) -> Option<Christoffel<R>>;
}

impl ChartOps<f64> for FramedChart {
    fn frame_s(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (self.frame_f64)(x)
    }
    fn gamma_s(&self, x: &[f64]) -> Option<Christoffel<f64>> {
        self.gamma_f64.as_ref().map(|f| f(x))
    }
}

impl ChartOps<Jet> for FramedChart {
    fn frame_s(&self, x: &[Jet]) -> Vec<Vec<Jet>> {
        (self.frame_jet)(x)
    }
    fn gamma_s(&self, x: &[Jet]) -> Option<Christoffel<Jet>> {
        self.gamma_jet.as_ref().map(|f| f(x))
    }
}

/// Max deviation of the frame Gram matrix from the identity at `x`
/// (ambient inner product when an embedding is attached).
pub fn orthonormality_residual(chart: &FramedChart, x: &[f64]) -> Result<f64> {
    chart.check_domain(x)?;
    let frame = match &chart.ambient {
        Some(amb) => (amb.frame_ambient)(&(amb.embedding)(x)),
        None => chart.frame_unchecked(x),
    };
    Ok(gram_residual(&frame))
}

/// Joint orthonormality of [tangent | normal] ambient frames; requires an
/// embedding.
pub fn joint_frame_residual(chart: &FramedChart, x: &[f64]) -> Result<f64> {
    chart.check_domain(x)?;
    let amb = chart.ambient()?;
    let p = (amb.embedding)(x);
    let mut all = (amb.frame_ambient)(&p);
    all.extend((amb.normal_frame)(&p));
    Ok(gram_residual(&all))
}

fn gram_residual(frame: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..frame.len() {
        for j in 0..frame.len() {
            let dot: f64 = frame[i].iter().zip(&frame[j]).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Euclidean space
// ---------------------------------------------------------------------------

fn euclid_frame<R: Scalar>(n: usize) -> Vec<Vec<R>> {
    (0..n)
        .map(|j| {
            let mut v = vec![R::zero(); n];
            v[j] = R::one();
            v
        })
        .collect()
}

/// Flat `R^n` with the standard basis frame.
pub fn euclidean(n: usize) -> FramedChart {
    assert!(n >= 1, "euclidean chart needs n >= 1");
    FramedChart {
        name: format!("euclidean({n})"),
        kind: ChartKind::Euclidean,
        n,
        m: n,
        base_point: vec![0.0; n],
        constant_christoffel: true,
        frame_f64: Box::new(move |_x| euclid_frame::<f64>(n)),
        frame_jet: Box::new(move |_x| euclid_frame::<Jet>(n)),
        gamma_f64: Some(Box::new(move |_x| Christoffel::zeros(n, n))),
        gamma_jet: Some(Box::new(move |_x| Christoffel::zeros(n, n))),
        domain_fn: Box::new(|_x| Ok(())),
        retraction_fn: Box::new(|x| x.to_vec()),
        ambient: Some(AmbientData {
            dim: n,
            codim: 0,
            embedding: Box::new(|x| x.to_vec()),
            frame_ambient: Box::new(move |_p| euclid_frame::<f64>(n)),
            normal_frame: Box::new(|_p| Vec::new()),
        }),
    }
}

// ---------------------------------------------------------------------------
// Unit n-sphere, single hemisphere chart
// ---------------------------------------------------------------------------

/// Tail sums `s[k] = sum_{r >= k} x_r^2` for coordinates `x_0..x_n`.
fn sphere_tail_sums<R: Scalar>(x: &[R]) -> Vec<R> {
    let mut s = vec![R::zero(); x.len() + 1];
    for k in (0..x.len()).rev() {
        s[k] = s[k + 1].clone() + x[k].clone() * x[k].clone();
    }
    s
}

fn sphere_frame<R: Scalar>(n: usize, x: &[R]) -> Vec<Vec<R>> {
    let s = sphere_tail_sums(x);
    let mut frame = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = vec![R::zero(); n + 1];
        let scale = (s[j + 1].clone() / s[j].clone()).sqrt();
        v[j] = -scale.clone();
        let coef = scale * x[j].clone() / s[j + 1].clone();
        for r in (j + 1)..=n {
            v[r] = coef.clone() * x[r].clone();
        }
        frame.push(v);
    }
    frame
}

fn sphere_gamma<R: Scalar>(n: usize, x: &[R]) -> Christoffel<R> {
    let s = sphere_tail_sums(x);
    let mut g = Christoffel::zeros(n, n);
    // Only gamma(k,j,k) = -gamma(k,k,j) = x_j / sqrt(s_j s_{j+1}), j < k.
    for k in 0..n {
        for j in 0..k {
            let val = x[j].clone() / (s[j].clone() * s[j + 1].clone()).sqrt();
            g.set(k, j, k, val.clone());
            g.set(k, k, j, -val);
        }
    }
    g
}

/// Unit sphere in `R^{n+1}` restricted to one hemisphere (sign of the last
/// coordinate). Crossing the equator is a domain error; chart atlases are
/// out of scope.
pub fn sphere(n: usize, pole_positive: bool) -> FramedChart {
    assert!(n >= 1, "sphere chart needs n >= 1");
    let sign = if pole_positive { 1.0 } else { -1.0 };
    let mut base = vec![0.0; n + 1];
    base[n] = sign;
    FramedChart {
        name: format!("sphere({n},{})", if pole_positive { "+" } else { "-" }),
        kind: ChartKind::Sphere,
        n,
        m: n + 1,
        base_point: base,
        constant_christoffel: false,
        frame_f64: Box::new(move |x| sphere_frame::<f64>(n, x)),
        frame_jet: Box::new(move |x| sphere_frame::<Jet>(n, x)),
        gamma_f64: Some(Box::new(move |x| sphere_gamma::<f64>(n, x))),
        gamma_jet: Some(Box::new(move |x| sphere_gamma::<Jet>(n, x))),
        domain_fn: Box::new(move |x| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > EPS_DOMAIN {
                return Err(format!("|x| = {norm} is off the unit sphere"));
            }
            let last = x[x.len() - 1];
            if sign * last <= 0.0 {
                return Err("wrong hemisphere: last coordinate changed sign".into());
            }
            // The frame denominators s_j are all at least x_n^2; keep them
            // bounded away from the equator singularity.
            if last * last <= EPS_DOMAIN {
                return Err(format!(
                    "tail sum {:e} too close to the equator singularity",
                    last * last
                ));
            }
            Ok(())
        }),
        retraction_fn: Box::new(|x| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter().map(|v| v / norm).collect()
        }),
        ambient: Some(AmbientData {
            dim: n + 1,
            codim: 1,
            embedding: Box::new(|x| x.to_vec()),
            frame_ambient: Box::new(move |p| sphere_frame::<f64>(n, p)),
            normal_frame: Box::new(|p| {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                vec![p.iter().map(|v| v / norm).collect()]
            }),
        }),
    }
}

// ---------------------------------------------------------------------------
// Rigid motions of R^3 with the left-invariant metric making
// (Y1, Y2, Y3, X1, X2, X3) orthonormal; representation (C row-major, r).
// ---------------------------------------------------------------------------

/// Index of entry (i, j) of the rotation block in the 12-dim representation.
#[inline]
fn ci(i: usize, j: usize) -> usize {
    3 * i + j
}

fn se3_frame<R: Scalar>(x: &[R]) -> Vec<Vec<R>> {
    let inv_s2 = R::from_f64(1.0 / SQRT2);
    let mut frame = Vec::with_capacity(6);
    // Rotational fields: Cdot = C * G_a / sqrt(2) for the three skew
    // generators (column pairs (0,1), (0,2), (1,2)).
    for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
        let mut v = vec![R::zero(); 12];
        for i in 0..3 {
            v[ci(i, q)] = inv_s2.clone() * x[ci(i, p)].clone();
            v[ci(i, p)] = -(inv_s2.clone() * x[ci(i, q)].clone());
        }
        frame.push(v);
    }
    // Translational fields: rdot = C * e_k.
    for k in 0..3 {
        let mut v = vec![R::zero(); 12];
        for i in 0..3 {
            v[9 + i] = x[ci(i, k)].clone();
        }
        frame.push(v);
    }
    frame
}

fn se3_gamma<R: Scalar>() -> Christoffel<R> {
    let mut g = Christoffel::zeros(6, 6);
    let a = 1.0 / (2.0 * SQRT2);
    let b = 1.0 / SQRT2;
    // (k, j, i, value), 0-based frame order (Y1, Y2, Y3, X1, X2, X3).
    let entries: [(usize, usize, usize, f64); 6] = [
        (0, 1, 2, -a),
        (1, 0, 2, a),
        (2, 0, 1, -a),
        (0, 3, 4, -b),
        (1, 3, 5, -b),
        (2, 4, 5, -b),
    ];
    for &(k, j, i, v) in &entries {
        g.set(k, j, i, R::from_f64(v));
        g.set(k, i, j, R::from_f64(-v));
    }
    g
}

fn se3_embed(x: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; 16];
    for i in 0..3 {
        for j in 0..3 {
            p[4 * i + j] = x[ci(i, j)];
        }
        p[4 * i + 3] = x[9 + i];
    }
    p[15] = 1.0;
    p
}

/// Ambient tangent frame fields on `R^16` (4x4 matrices, row-major cells).
fn se3_ambient_frame(p: &[f64]) -> Vec<Vec<f64>> {
    let c = |i: usize, j: usize| p[4 * i + j];
    let mut frame = Vec::with_capacity(6);
    for &(pcol, qcol) in &[(0usize, 1usize), (0, 2), (1, 2)] {
        let mut v = vec![0.0; 16];
        for i in 0..3 {
            v[4 * i + qcol] += c(i, pcol) / SQRT2;
            v[4 * i + pcol] -= c(i, qcol) / SQRT2;
        }
        frame.push(v);
    }
    for k in 0..3 {
        let mut v = vec![0.0; 16];
        for i in 0..3 {
            v[4 * i + 3] += c(i, k);
        }
        frame.push(v);
    }
    frame
}

fn se3_ambient_normals(p: &[f64]) -> Vec<Vec<f64>> {
    let c = |i: usize, j: usize| p[4 * i + j];
    let mut frame = Vec::with_capacity(10);
    // Symmetric partners of the rotational fields.
    for &(pcol, qcol) in &[(0usize, 1usize), (0, 2), (1, 2)] {
        let mut v = vec![0.0; 16];
        for i in 0..3 {
            v[4 * i + qcol] += c(i, pcol) / SQRT2;
            v[4 * i + pcol] += c(i, qcol) / SQRT2;
        }
        frame.push(v);
    }
    // Radial fields along each rotation column.
    for k in 0..3 {
        let mut v = vec![0.0; 16];
        for i in 0..3 {
            v[4 * i + k] += c(i, k);
        }
        frame.push(v);
    }
    // Constant fields on the affine row.
    for mu in 0..4 {
        let mut v = vec![0.0; 16];
        v[12 + mu] = 1.0;
        frame.push(v);
    }
    frame
}

/// SE(3) as a framed chart: representation is the rotation block (row-major)
/// followed by the translation, with the left-invariant orthonormal frame
/// and its constant connection coefficients.
pub fn se3() -> FramedChart {
    let mut base = vec![0.0; 12];
    base[ci(0, 0)] = 1.0;
    base[ci(1, 1)] = 1.0;
    base[ci(2, 2)] = 1.0;
    FramedChart {
        name: "se3".into(),
        kind: ChartKind::Se3,
        n: 6,
        m: 12,
        base_point: base,
        constant_christoffel: true,
        frame_f64: Box::new(se3_frame::<f64>),
        frame_jet: Box::new(se3_frame::<Jet>),
        gamma_f64: Some(Box::new(|_x| se3_gamma::<f64>())),
        gamma_jet: Some(Box::new(|_x| se3_gamma::<Jet>())),
        domain_fn: Box::new(|x| {
            let c = crate::linalg::Matrix::from_vec(3, 3, x[..9].to_vec()).unwrap();
            let defect = c.orthogonality_defect();
            if defect > EPS_DOMAIN {
                return Err(format!("rotation block defect {defect:e}"));
            }
            if c.determinant() <= 0.0 {
                return Err("rotation block has non-positive determinant".into());
            }
            Ok(())
        }),
        retraction_fn: Box::new(|x| {
            let c = crate::linalg::Matrix::from_vec(3, 3, x[..9].to_vec()).unwrap();
            let q = project_to_so(&c).expect("retraction drift within limit");
            let mut out = q.as_slice().to_vec();
            out.extend_from_slice(&x[9..]);
            out
        }),
        ambient: Some(AmbientData {
            dim: 16,
            codim: 10,
            embedding: Box::new(se3_embed),
            frame_ambient: Box::new(se3_ambient_frame),
            normal_frame: Box::new(se3_ambient_normals),
        }),
    }
}

/// The Lie algebra of rigid motions with the induced metric: flat `R^6`,
/// carrying the skew-matrix embedding into `R^16`.
pub fn se3_flat() -> FramedChart {
    let mut chart = euclidean(6);
    chart.name = "se3_flat".into();
    chart.kind = ChartKind::Se3Flat;
    let embed = |x: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; 16];
        let s = 1.0 / SQRT2;
        p[1] = s * x[0];
        p[2] = s * x[1];
        p[6] = s * x[2];
        p[4] = -s * x[0];
        p[8] = -s * x[1];
        p[9] = -s * x[2];
        p[3] = x[3];
        p[7] = x[4];
        p[11] = x[5];
        p
    };
    let frame_ambient = |_p: &[f64]| -> Vec<Vec<f64>> {
        let s = 1.0 / SQRT2;
        let mut frame = Vec::with_capacity(6);
        for &(a, b) in &[(1usize, 4usize), (2, 8), (6, 9)] {
            let mut v = vec![0.0; 16];
            v[a] = s;
            v[b] = -s;
            frame.push(v);
        }
        for &a in &[3usize, 7, 11] {
            let mut v = vec![0.0; 16];
            v[a] = 1.0;
            frame.push(v);
        }
        frame
    };
    let normal_frame = |_p: &[f64]| -> Vec<Vec<f64>> {
        let s = 1.0 / SQRT2;
        let mut frame = Vec::with_capacity(10);
        for &(a, b) in &[(1usize, 4usize), (2, 8), (6, 9)] {
            let mut v = vec![0.0; 16];
            v[a] = s;
            v[b] = s;
            frame.push(v);
        }
        for &a in &[0usize, 5, 10] {
            let mut v = vec![0.0; 16];
            v[a] = 1.0;
            frame.push(v);
        }
        for mu in 0..4 {
            let mut v = vec![0.0; 16];
            v[12 + mu] = 1.0;
            frame.push(v);
        }
        frame
    };
    chart.ambient = Some(AmbientData {
        dim: 16,
        codim: 10,
        embedding: Box::new(embed),
        frame_ambient: Box::new(frame_ambient),
        normal_frame: Box::new(normal_frame),
    });
    chart
}

/// Sphere chart with deliberately negated connection coefficients. Exists
/// only as a mutation fixture: the verification suite must fail loudly when
/// fed this chart (the closed form no longer matches the differenced one).
pub fn sphere_corrupted_gamma(n: usize) -> FramedChart {
    let mut chart = sphere(n, true);
    chart.gamma_f64 = Some(Box::new(move |x| {
        let mut g = sphere_gamma::<f64>(n, x);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = -*g.get(k, j, i);
                    g.set(k, j, i, v);
                }
            }
        }
        g
    }));
    chart.gamma_jet = Some(Box::new(move |x| {
        let mut g = sphere_gamma::<Jet>(n, x);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = -g.get(k, j, i).clone();
                    g.set(k, j, i, v);
                }
            }
        }
        g
    }));
    chart
}

/// The flat plane imbedded into 3-space (codimension one), for pairing with
/// the 2-sphere in extended rollings.
pub fn plane_r3() -> FramedChart {
    let mut chart = euclidean(2);
    chart.name = "plane_r3".into();
    chart.ambient = Some(AmbientData {
        dim: 3,
        codim: 1,
        embedding: Box::new(|x| vec![x[0], x[1], 0.0]),
        frame_ambient: Box::new(|_p| vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
        normal_frame: Box::new(|_p| vec![vec![0.0, 0.0, 1.0]]),
    });
    chart
}

// ---------------------------------------------------------------------------
// One-dimensional rolling examples: circle, line, spiral
// ---------------------------------------------------------------------------

fn circle_frame<R: Scalar>(x: &[R]) -> Vec<Vec<R>> {
    // Unit circle centered at (0, 1): tangent (1 - x1, x0).
    vec![vec![R::one() - x[1].clone(), x[0].clone()]]
}

fn circle_chart_core(name: &str) -> FramedChart {
    FramedChart {
        name: name.into(),
        kind: ChartKind::Circle,
        n: 1,
        m: 2,
        base_point: vec![0.0, 0.0],
        constant_christoffel: true,
        frame_f64: Box::new(circle_frame::<f64>),
        frame_jet: Box::new(circle_frame::<Jet>),
        gamma_f64: Some(Box::new(|_x| Christoffel::zeros(1, 1))),
        gamma_jet: Some(Box::new(|_x| Christoffel::zeros(1, 1))),
        domain_fn: Box::new(|x| {
            let r = (x[0] * x[0] + (x[1] - 1.0) * (x[1] - 1.0)).sqrt();
            if (r - 1.0).abs() > EPS_DOMAIN {
                Err(format!("radius {r} off the unit circle"))
            } else {
                Ok(())
            }
        }),
        retraction_fn: Box::new(|x| {
            let d = [x[0], x[1] - 1.0];
            let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
            vec![d[0] / r, 1.0 + d[1] / r]
        }),
        ambient: None,
    }
}

/// Unit circle in the plane (codimension 1).
pub fn circle_r2() -> FramedChart {
    let mut chart = circle_chart_core("circle_r2");
    chart.ambient = Some(AmbientData {
        dim: 2,
        codim: 1,
        embedding: Box::new(|x| x.to_vec()),
        frame_ambient: Box::new(|p| vec![vec![1.0 - p[1], p[0]]]),
        normal_frame: Box::new(|p| vec![vec![-p[0], 1.0 - p[1]]]),
    });
    chart
}

/// Unit circle lying in the plane `x3 = 0` of 3-space (codimension 2).
pub fn circle_r3() -> FramedChart {
    let mut chart = circle_chart_core("circle_r3");
    chart.ambient = Some(AmbientData {
        dim: 3,
        codim: 2,
        embedding: Box::new(|x| vec![x[0], x[1], 0.0]),
        frame_ambient: Box::new(|p| vec![vec![1.0 - p[1], p[0], 0.0]]),
        normal_frame: Box::new(|p| vec![vec![-p[0], 1.0 - p[1], 0.0], vec![0.0, 0.0, 1.0]]),
    });
    chart
}

fn line_core(name: &str) -> FramedChart {
    FramedChart {
        name: name.into(),
        kind: ChartKind::Line,
        n: 1,
        m: 1,
        base_point: vec![0.0],
        constant_christoffel: true,
        frame_f64: Box::new(|_x| vec![vec![1.0]]),
        frame_jet: Box::new(|_x| vec![vec![Jet::constant(1.0)]]),
        gamma_f64: Some(Box::new(|_x| Christoffel::zeros(1, 1))),
        gamma_jet: Some(Box::new(|_x| Christoffel::zeros(1, 1))),
        domain_fn: Box::new(|_x| Ok(())),
        retraction_fn: Box::new(|x| x.to_vec()),
        ambient: None,
    }
}

/// The real line imbedded straight into 3-space.
pub fn line_r3() -> FramedChart {
    let mut chart = line_core("line_r3");
    chart.ambient = Some(AmbientData {
        dim: 3,
        codim: 2,
        embedding: Box::new(|x| vec![x[0], 0.0, 0.0]),
        frame_ambient: Box::new(|_p| vec![vec![1.0, 0.0, 0.0]]),
        normal_frame: Box::new(|_p| vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
    });
    chart
}

/// The real line imbedded as a unit-speed spiral in 3-space.
pub fn spiral_r3() -> FramedChart {
    let mut chart = line_core("spiral_r3");
    chart.kind = ChartKind::Spiral;
    let s = 1.0 / SQRT2;
    chart.ambient = Some(AmbientData {
        dim: 3,
        codim: 2,
        embedding: Box::new(move |x| vec![s * x[0].cos(), s * x[0].sin(), s * x[0]]),
        // The parameter is recovered from the ambient height, so the fields
        // extend smoothly off the curve.
        frame_ambient: Box::new(move |p| {
            let t = SQRT2 * p[2];
            vec![vec![-s * t.sin(), s * t.cos(), s]]
        }),
        normal_frame: Box::new(move |p| {
            let t = SQRT2 * p[2];
            vec![
                vec![-s * t.sin(), s * t.cos(), -s],
                vec![-t.cos(), -t.sin(), 0.0],
            ]
        }),
    });
    chart
}

// ---------------------------------------------------------------------------
// Flat cylinder (locally isometric to the plane)
// ---------------------------------------------------------------------------

fn cylinder_frame<R: Scalar>(x: &[R]) -> Vec<Vec<R>> {
    vec![
        vec![-x[1].clone(), x[0].clone(), R::zero()],
        vec![R::zero(), R::zero(), R::one()],
    ]
}

/// Unit cylinder `x0^2 + x1^2 = 1` in 3-space.
pub fn flat_cylinder() -> FramedChart {
    FramedChart {
        name: "flat_cylinder".into(),
        kind: ChartKind::Cylinder,
        n: 2,
        m: 3,
        base_point: vec![1.0, 0.0, 0.0],
        constant_christoffel: false,
        frame_f64: Box::new(cylinder_frame::<f64>),
        frame_jet: Box::new(cylinder_frame::<Jet>),
        gamma_f64: Some(Box::new(|_x| Christoffel::zeros(2, 2))),
        gamma_jet: Some(Box::new(|_x| Christoffel::zeros(2, 2))),
        domain_fn: Box::new(|x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if (r - 1.0).abs() > EPS_DOMAIN {
                Err(format!("radius {r} off the unit cylinder"))
            } else {
                Ok(())
            }
        }),
        retraction_fn: Box::new(|x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            vec![x[0] / r, x[1] / r, x[2]]
        }),
        ambient: Some(AmbientData {
            dim: 3,
            codim: 1,
            embedding: Box::new(|x| x.to_vec()),
            frame_ambient: Box::new(|p| {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                vec![vec![-p[1] / r, p[0] / r, 0.0], vec![0.0, 0.0, 1.0]]
            }),
            normal_frame: Box::new(|p| {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                vec![vec![p[0] / r, p[1] / r, 0.0]]
            }),
        }),
    }
}
