//! Small dense linear algebra specialized to SO(n) and so(n): skew basis
//! matrices, their commutator table, matrix exponential, polar retraction to
//! the nearest rotation, and SVD-based rank of a vector span.
//!
//! All operations are pure functions; matrices are tiny (n <= 16 rotations,
//! vector spans of a few thousand rows at most).

use crate::error::{CoreError, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`. Serializes to JSON as nested row-major
/// arrays of doubles.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(CoreError::Dimension("matrix needs at least one row".into()));
        }
        let c = rows[0].len();
        if c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(CoreError::Dimension("ragged or empty rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite("matrix entry".into()));
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Dimension(format!(
                "expected {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        for x in m.data.iter_mut() {
            *x *= s;
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        m
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
        m
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `|| M^T M - I ||_F`, the orthogonality defect.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut g = self.transpose().matmul(self);
        for i in 0..g.rows {
            g[(i, i)] -= 1.0;
        }
        g.frobenius_norm()
    }

    pub fn determinant(&self) -> f64 {
        to_na(self).determinant()
    }

    fn is_skew(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i + 1 {
                worst = worst.max((self[(i, j)] + self[(j, i)]).abs());
            }
        }
        worst <= tol
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Index pair `1 <= i < j <= n` naming a skew basis element (1-based, kept in
/// the classical convention).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SkewIndex {
    pub i: usize,
    pub j: usize,
}

impl SkewIndex {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 || i >= j {
            return Err(CoreError::BadInput(format!(
                "skew index requires 1 <= i < j, got ({i}, {j})"
            )));
        }
        Ok(SkewIndex { i, j })
    }

    /// All pairs for dimension `n` in lexicographic order.
    pub fn all(n: usize) -> Vec<SkewIndex> {
        let mut v = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                v.push(SkewIndex { i, j });
            }
        }
        v
    }
}

/// The n x n matrix `E_ij - E_ji`, the value at the identity of the standard
/// left-invariant basis field of TSO(n).
pub fn skew_basis(n: usize, idx: SkewIndex) -> Result<Matrix> {
    if idx.j > n {
        return Err(CoreError::BadInput(format!(
            "skew index ({}, {}) out of range for n={n}",
            idx.i, idx.j
        )));
    }
    let mut m = Matrix::zeros(n, n);
    m[(idx.i - 1, idx.j - 1)] = 1.0;
    m[(idx.j - 1, idx.i - 1)] = -1.0;
    Ok(m)
}

/// One signed term of a bracket expansion in the skew basis.
pub type SignedSkew = (f64, SkewIndex);

/// Full commutator table: one entry per ordered index pair.
pub type BracketTable = Vec<((SkewIndex, SkewIndex), Vec<SignedSkew>)>;

/// Commutator table of the skew basis:
/// `[W_ij, W_kl] = d_jk W_il + d_il W_jk - d_ik W_jl - d_jl W_ik`,
/// returned with every term normalized to `i < j` form.
pub fn so_bracket_table(n: usize) -> Result<BracketTable> {
    if n < 2 {
        return Err(CoreError::BadInput("bracket table needs n >= 2".into()));
    }
    let idxs = SkewIndex::all(n);
    let mut table = Vec::new();
    for &a in &idxs {
        for &b in &idxs {
            table.push(((a, b), bracket_terms(a, b)));
        }
    }
    Ok(table)
}

/// Expands `[W_a, W_b]` into signed basis terms.
pub fn bracket_terms(a: SkewIndex, b: SkewIndex) -> Vec<SignedSkew> {
    let (i, j, k, l) = (a.i, a.j, b.i, b.j);
    let mut raw: Vec<(f64, usize, usize)> = Vec::new();
    let delta = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    raw.push((delta(j, k), i, l));
    raw.push((delta(i, l), j, k));
    raw.push((-delta(i, k), j, l));
    raw.push((-delta(j, l), i, k));
    let mut terms: Vec<SignedSkew> = Vec::new();
    for (sign, p, q) in raw {
        if sign == 0.0 || p == q {
            continue;
        }
        let (sign, p, q) = if p < q { (sign, p, q) } else { (-sign, q, p) };
        if let Some(t) = terms.iter_mut().find(|t| t.1 == SkewIndex { i: p, j: q }) {
            t.0 += sign;
        } else {
            terms.push((sign, SkewIndex { i: p, j: q }));
        }
    }
    terms.retain(|t| t.0 != 0.0);
    terms
}

/// Relative singular-value threshold used for rank decisions.
///
/// A singular value counts toward the rank when it exceeds
/// `tau * sigma_max * max(rows, cols)`. The default `tau` keeps the
/// integer flag ranks stable under finite-difference noise in bracket
/// values.
#[derive(Clone, Copy, Debug)]
pub struct RankPolicy {
    pub tau: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy { tau: 1e-8 }
    }
}

/// Rank of the span of a set of equal-length vectors, by SVD.
pub fn rank_of_span(vectors: &[Vec<f64>], policy: RankPolicy) -> Result<usize> {
    if vectors.is_empty() {
        return Err(CoreError::BadInput("rank of empty vector set".into()));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(CoreError::Dimension("vectors of unequal length".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite("vector entry".into()));
    }
    let m = DMatrix::from_fn(vectors.len(), dim, |i, j| vectors[i][j]);
    let svals = m.singular_values();
    let sigma_max = svals.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    let thr = policy.tau * sigma_max * vectors.len().max(dim) as f64;
    Ok(svals.iter().filter(|&&s| s > thr).count())
}

/// Matrix exponential of a skew-symmetric matrix; lands in SO(n).
///
/// Closed forms for n = 2, 3, scaling-and-squaring with a fixed order-12
/// series otherwise. Inputs are small-norm per-step generators, so the fixed
/// order is ample.
pub fn exp_skew(omega: &Matrix) -> Result<Matrix> {
    if omega.nrows() != omega.ncols() {
        return Err(CoreError::Dimension("exp of non-square matrix".into()));
    }
    if !omega.is_skew(1e-12 * (1.0 + omega.max_abs())) {
        let mut worst: f64 = 0.0;
        for i in 0..omega.nrows() {
            for j in 0..omega.ncols() {
                worst = worst.max((omega[(i, j)] + omega[(j, i)]).abs());
            }
        }
        return Err(CoreError::NotSkew { residual: worst });
    }
    let n = omega.nrows();
    match n {
        1 => Ok(Matrix::identity(1)),
        2 => {
            let t = omega[(0, 1)];
            Matrix::from_rows(&[vec![t.cos(), t.sin()], vec![-t.sin(), t.cos()]])
        }
        3 => Ok(exp_so3(omega)),
        _ => Ok(exp_series(omega)),
    }
}

fn exp_so3(omega: &Matrix) -> Matrix {
    // Rodrigues: exp(W) = I + sin(t)/t W + (1-cos t)/t^2 W^2,
    // with t^2 = (w32^2 + w13^2 + w21^2).
    let (a, b, c) = (omega[(2, 1)], omega[(0, 2)], omega[(1, 0)]);
    let t2 = a * a + b * b + c * c;
    let t = t2.sqrt();
    let (s1, s2) = if t < 1e-4 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (t.sin() / t, (1.0 - t.cos()) / t2)
    };
    let w2 = omega.matmul(omega);
    let mut out = Matrix::identity(3);
    out = out.add(&omega.scale(s1));
    out = out.add(&w2.scale(s2));
    out
}

fn exp_series(omega: &Matrix) -> Matrix {
    let n = omega.nrows();
    let norm = omega.max_abs() * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = omega.scale(0.5f64.powi(squarings as i32));
    let mut out = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=12 {
        term = term.matmul(&scaled).scale(1.0 / k as f64);
        out = out.add(&term);
    }
    for _ in 0..squarings {
        out = out.matmul(&out);
    }
    out
}

/// Maximum orthogonality drift accepted by [`project_to_so`]. Larger drift
/// signals an integrator failure rather than ordinary roundoff.
pub const PROJECTION_DRIFT_LIMIT: f64 = 0.5;

/// Nearest rotation in Frobenius norm (polar factor via SVD).
pub fn project_to_so(m: &Matrix) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::Dimension("polar projection of non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Err(CoreError::Dimension("empty matrix".into()));
    }
    let det = m.determinant();
    if det <= 0.0 {
        return Err(CoreError::BadDeterminant { det });
    }
    let drift = m.orthogonality_defect();
    if drift > PROJECTION_DRIFT_LIMIT {
        return Err(CoreError::DriftTooLarge {
            drift,
            limit: PROJECTION_DRIFT_LIMIT,
        });
    }
    let svd = to_na(m).svd(true, true);
    let u = svd.u.as_ref().expect("svd with vectors");
    let vt = svd.v_t.as_ref().expect("svd with vectors");
    let q = from_na(&(u * vt));
    debug_assert!(q.determinant() > 0.0);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skew_basis_definition_instances() {
        // Only generator of so(2).
        let w = skew_basis(2, SkewIndex::new(1, 2).unwrap()).unwrap();
        assert_eq!(w.row(0), &[0.0, 1.0]);
        assert_eq!(w.row(1), &[-1.0, 0.0]);
        // n=3, (2,3): +1 at (2,3), -1 at (3,2), zeros elsewhere.
        let w = skew_basis(3, SkewIndex::new(2, 3).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = match (i, j) {
                    (1, 2) => 1.0,
                    (2, 1) => -1.0,
                    _ => 0.0,
                };
                assert_eq!(w[(i, j)], expect);
            }
        }
        assert!(skew_basis(3, SkewIndex { i: 2, j: 4 }).is_err());
        assert!(SkewIndex::new(3, 2).is_err());
    }

    #[test]
    fn commutator_instance_w12_w13() {
        // [W_12, W_13] = -W_23 in n=3.
        let n = 3;
        let a = skew_basis(n, SkewIndex::new(1, 2).unwrap()).unwrap();
        let b = skew_basis(n, SkewIndex::new(1, 3).unwrap()).unwrap();
        let comm = a.matmul(&b).sub(&b.matmul(&a));
        let expect = skew_basis(n, SkewIndex::new(2, 3).unwrap()).unwrap().scale(-1.0);
        assert!(comm.sub(&expect).max_abs() < 1e-15);
        let terms = bracket_terms(SkewIndex::new(1, 2).unwrap(), SkewIndex::new(1, 3).unwrap());
        assert_eq!(terms, vec![(-1.0, SkewIndex::new(2, 3).unwrap())]);
        // Disjoint indices commute: [W_12, W_34] = 0 in n=4.
        assert!(bracket_terms(SkewIndex::new(1, 2).unwrap(), SkewIndex::new(3, 4).unwrap())
            .is_empty());
    }

    #[test]
    fn bracket_table_matches_matrix_commutators_exhaustively() {
        // Brute-force oracle over all index pairs for n <= 6.
        for n in 2..=6 {
            for ((a, b), terms) in so_bracket_table(n).unwrap() {
                let wa = skew_basis(n, a).unwrap();
                let wb = skew_basis(n, b).unwrap();
                let comm = wa.matmul(&wb).sub(&wb.matmul(&wa));
                let mut expect = Matrix::zeros(n, n);
                for (sign, idx) in terms {
                    expect = expect.add(&skew_basis(n, idx).unwrap().scale(sign));
                }
                assert!(
                    comm.sub(&expect).max_abs() < 1e-15,
                    "table wrong for n={n} [{a:?},{b:?}]"
                );
            }
        }
    }

    #[test]
    fn matrix_serializes_as_nested_row_major_arrays() {
        let m = Matrix::from_rows(&[vec![1.0, 2.5], vec![-3.0, 4.0]]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[1.0,2.5],[-3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }

    #[test]
    fn rank_basics() {
        let pol = RankPolicy::default();
        assert_eq!(
            rank_of_span(&[vec![1.0, 0.0], vec![0.0, 1.0]], pol).unwrap(),
            2
        );
        assert_eq!(
            rank_of_span(&[vec![1.0, 1.0], vec![2.0, 2.0]], pol).unwrap(),
            1
        );
        assert!(rank_of_span(&[], pol).is_err());
        assert!(rank_of_span(&[vec![f64::NAN]], pol).is_err());
    }

    #[test]
    fn rank_recovers_noisy_subspace_in_r27() {
        // 12 random vectors spanning a known 12-dim subspace of R^27 plus
        // 1e-12 noise must still read rank 12, for any tau in [1e-10, 1e-6].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..27).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let vectors: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let coeff: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (0..27)
                    .map(|d| {
                        let v: f64 = (0..12).map(|b| coeff[b] * basis[b][d]).sum();
                        v + 1e-12 * rng.gen_range(-1.0..1.0)
                    })
                    .collect()
            })
            .collect();
        for tau in [1e-10, 1e-8, 1e-6] {
            assert_eq!(rank_of_span(&vectors, RankPolicy { tau }).unwrap(), 12);
        }
    }

    #[test]
    fn exp_closed_forms() {
        let n2 = exp_skew(&skew_basis(2, SkewIndex::new(1, 2).unwrap()).unwrap().scale(0.3))
            .unwrap();
        assert_relative_eq!(n2[(0, 0)], 0.3f64.cos(), max_relative = 1e-15);
        assert_relative_eq!(n2[(0, 1)], 0.3f64.sin(), max_relative = 1e-15);
        assert_relative_eq!(n2[(1, 0)], -(0.3f64.sin()), max_relative = 1e-15);
        let id = exp_skew(&Matrix::zeros(4, 4)).unwrap();
        assert!(id.sub(&Matrix::identity(4)).max_abs() == 0.0);
        assert!(exp_skew(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).is_err());
    }

    #[test]
    fn exp_reproduces_block_rotation_generator() {
        // exp of t*(1/2 W_23 + W_45) in n=6: rotation by t/2 in the (2,3)
        // plane and by t in the (4,5) plane.
        let t = 0.77;
        let mut gen = Matrix::zeros(6, 6);
        gen = gen.add(&skew_basis(6, SkewIndex::new(2, 3).unwrap()).unwrap().scale(0.5 * t));
        gen = gen.add(&skew_basis(6, SkewIndex::new(4, 5).unwrap()).unwrap().scale(t));
        let a = exp_skew(&gen).unwrap();
        let mut expect = Matrix::identity(6);
        let (h, f) = (t / 2.0, t);
        expect[(1, 1)] = h.cos();
        expect[(1, 2)] = h.sin();
        expect[(2, 1)] = -h.sin();
        expect[(2, 2)] = h.cos();
        expect[(3, 3)] = f.cos();
        expect[(3, 4)] = f.sin();
        expect[(4, 3)] = -f.sin();
        expect[(4, 4)] = f.cos();
        assert!(a.sub(&expect).max_abs() < 1e-13);
        assert!(a.orthogonality_defect() <= 1e-12);
        assert_relative_eq!(a.determinant(), 1.0, epsilon = 1e-9);
    }

    /// Independent polar-factor oracle: symmetric square root of G^T G by
    /// eigendecomposition, U = G (G^T G)^{-1/2}.
    fn polar_by_eigen(g: &Matrix) -> Matrix {
        let na = DMatrix::from_row_slice(g.nrows(), g.ncols(), g.as_slice());
        let gtg = na.transpose() * &na;
        let eig = gtg.symmetric_eigen();
        let mut inv_sqrt = DMatrix::zeros(g.nrows(), g.ncols());
        for k in 0..g.nrows() {
            let lam = eig.eigenvalues[k].max(0.0);
            let v = eig.eigenvectors.column(k);
            let s = 1.0 / lam.sqrt();
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    inv_sqrt[(i, j)] += s * v[i] * v[j];
                }
            }
        }
        from_na(&(na * inv_sqrt))
    }

    #[test]
    fn polar_projection_against_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 4, 6] {
            // Random rotation via exp of random skew.
            let mut skew = Matrix::zeros(n, n);
            for idx in SkewIndex::all(n) {
                let v = rng.gen_range(-1.0..1.0);
                skew[(idx.i - 1, idx.j - 1)] = v;
                skew[(idx.j - 1, idx.i - 1)] = -v;
            }
            let r = exp_skew(&skew).unwrap();
            // Idempotent on SO(n).
            assert!(project_to_so(&r).unwrap().sub(&r).max_abs() < 1e-12);
            // Scaling removed.
            assert!(project_to_so(&r.scale(1.001)).unwrap().sub(&r).max_abs() < 1e-10);
            // G = R * exp-ish of small symmetric perturbation.
            let mut g = r.clone();
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += 0.01 * rng.gen_range(-1.0..1.0);
                }
            }
            if g.determinant() <= 0.0 {
                continue;
            }
            let u = project_to_so(&g).unwrap();
            let oracle = polar_by_eigen(&g);
            assert!(u.sub(&oracle).max_abs() < 1e-10);
            assert!(u.orthogonality_defect() <= 1e-12);
        }
    }

    #[test]
    fn polar_projection_error_paths() {
        let mut flipped = Matrix::identity(3);
        flipped[(0, 0)] = -1.0;
        assert!(matches!(
            project_to_so(&flipped),
            Err(CoreError::BadDeterminant { .. })
        ));
        let drifted = Matrix::identity(3).scale(2.0);
        assert!(matches!(
            project_to_so(&drifted),
            Err(CoreError::DriftTooLarge { .. })
        ));
    }

    proptest! {
        #[test]
        fn rank_is_permutation_and_scale_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nvec = rng.gen_range(2usize..7);
            let dim = rng.gen_range(2usize..9);
            let vectors: Vec<Vec<f64>> = (0..nvec)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let pol = RankPolicy::default();
            let r = rank_of_span(&vectors, pol).unwrap();
            let mut shuffled = vectors.clone();
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(rank_of_span(&shuffled, pol).unwrap(), r);
            let scaled: Vec<Vec<f64>> =
                vectors.iter().map(|v| v.iter().map(|x| x * 1e3).collect()).collect();
            prop_assert_eq!(rank_of_span(&scaled, pol).unwrap(), r);
        }

        #[test]
        fn exp_skew_lands_in_so_n(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2usize..7);
            let mut skew = Matrix::zeros(n, n);
            for idx in SkewIndex::all(n) {
                let v = rng.gen_range(-2.0..2.0);
                skew[(idx.i - 1, idx.j - 1)] = v;
                skew[(idx.j - 1, idx.i - 1)] = -v;
            }
            let q = exp_skew(&skew).unwrap();
            prop_assert!(q.orthogonality_defect() <= 1e-12);
            prop_assert!((q.determinant() - 1.0).abs() <= 1e-9);
        }
    }
}
