//! Scalar abstraction and nested first-order jets.
//!
//! Frame fields and Christoffel formulas are written once, generically over
//! [`Scalar`], and instantiated for plain `f64` (integrators, transports) and
//! for [`Jet`] (exact directional derivatives of any order, used by the
//! Lie-bracket machinery). A `Jet` of depth `d` carries one coefficient per
//! subset of `d` infinitesimal directions, so nested brackets differentiate
//! through the field formulas without truncation error.

use smallvec::SmallVec;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface needed by chart and field formulas.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Zeroth-order part.
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

/// Truncated multivariate jet: coefficients indexed by subsets of the active
/// infinitesimal directions. Length is always a power of two; `c[0]` is the
/// value, `c[mask]` the coefficient of the product of directions in `mask`.
///
/// Jets of different depths mix freely; the shorter one is treated as having
/// zero coefficients on the missing directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    c: SmallVec<[f64; 8]>,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = SmallVec::new();
        c.push(v);
        Jet { c }
    }

    /// Number of active directions (log2 of coefficient count).
    pub fn depth(&self) -> usize {
        self.c.len().trailing_zeros() as usize
    }

    /// Adds a fresh direction: the result has value part `self` and
    /// derivative part `d` along the new direction.
    pub fn extend(&self, d: &Jet) -> Jet {
        let len = self.c.len().max(d.c.len());
        let mut c = SmallVec::with_capacity(2 * len);
        for i in 0..len {
            c.push(self.c.get(i).copied().unwrap_or(0.0));
        }
        for i in 0..len {
            c.push(d.c.get(i).copied().unwrap_or(0.0));
        }
        Jet { c }
    }

    /// Splits off the top direction: `(even part, coefficient of the top direction)`.
    pub fn split_top(&self) -> (Jet, Jet) {
        let half = self.c.len() / 2;
        if half == 0 {
            return (self.clone(), Jet::constant(0.0));
        }
        let lo = Jet {
            c: SmallVec::from_slice(&self.c[..half]),
        };
        let hi = Jet {
            c: SmallVec::from_slice(&self.c[half..]),
        };
        (lo, hi)
    }

    fn get(&self, mask: usize) -> f64 {
        self.c.get(mask).copied().unwrap_or(0.0)
    }

    /// Composition with an analytic function given by its Taylor coefficients
    /// at the value part: `taylor[k]` = f^(k)(value)/k!.
    fn compose(&self, taylor: &[f64]) -> Jet {
        let len = self.c.len();
        // Nilpotent part of self.
        let mut eta = self.clone();
        eta.c[0] = 0.0;
        let mut out = Jet {
            c: SmallVec::from_elem(0.0, len),
        };
        out.c[0] = taylor[0];
        // Accumulate taylor[k] * eta^k.
        let mut pow = Jet {
            c: SmallVec::from_elem(0.0, len),
        };
        pow.c[0] = 1.0;
        for &tk in taylor.iter().skip(1) {
            pow = &pow * &eta;
            if pow.c.iter().all(|&x| x == 0.0) {
                break;
            }
            for (o, p) in out.c.iter_mut().zip(pow.c.iter()) {
                *o += tk * p;
            }
        }
        out
    }

    fn taylor_len(&self) -> usize {
        self.depth() + 1
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let len = self.c.len().max(rhs.c.len());
        let mut c = SmallVec::with_capacity(len);
        for i in 0..len {
            c.push(self.get(i) + rhs.get(i));
        }
        Jet { c }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let len = self.c.len().max(rhs.c.len());
        let mut c = SmallVec::with_capacity(len);
        for i in 0..len {
            c.push(self.get(i) - rhs.get(i));
        }
        Jet { c }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let len = self.c.len().max(rhs.c.len());
        let mut c: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, len);
        // c[s] = sum over sub-masks t of s: a[t] * b[s \ t]
        for (s, slot) in c.iter_mut().enumerate() {
            let mut t = s;
            loop {
                let a = self.get(t);
                if a != 0.0 {
                    *slot += a * rhs.get(s ^ t);
                }
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
        }
        Jet { c }
    }
}

impl Div for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        let v = rhs.c[0];
        let n = rhs.taylor_len().max(self.taylor_len());
        // Taylor coefficients of 1/x at v: (-1)^k / v^(k+1).
        let mut taylor = Vec::with_capacity(n);
        let mut t = 1.0 / v;
        for _ in 0..n {
            taylor.push(t);
            t *= -1.0 / v;
        }
        let inv = rhs.compose(&taylor);
        self * &inv
    }
}

macro_rules! jet_val_ops {
    ($($tr:ident, $f:ident);*) => {$(
        impl $tr for Jet { type Output = Jet; fn $f(self, rhs: Jet) -> Jet { (&self).$f(&rhs) } }
    )*};
}
jet_val_ops!(Add, add; Sub, sub; Mul, mul; Div, div);

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut c = self.c.clone();
        for x in c.iter_mut() {
            *x = -*x;
        }
        Jet { c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn sqrt(&self) -> Self {
        let v = self.c[0];
        let n = self.taylor_len();
        // Taylor of sqrt at v: binom(1/2, k) v^(1/2 - k).
        let mut taylor = Vec::with_capacity(n);
        let mut t = v.sqrt();
        for k in 0..n {
            taylor.push(t);
            let kf = k as f64;
            t *= (0.5 - kf) / (kf + 1.0) / v;
        }
        self.compose(&taylor)
    }
    fn sin(&self) -> Self {
        let v = self.c[0];
        let n = self.taylor_len();
        let (s, c) = v.sin_cos();
        let cycle = [s, c, -s, -c];
        let mut fact = 1.0;
        let mut taylor = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
            }
            taylor.push(cycle[k % 4] / fact);
        }
        self.compose(&taylor)
    }
    fn cos(&self) -> Self {
        let v = self.c[0];
        let n = self.taylor_len();
        let (s, c) = v.sin_cos();
        let cycle = [c, -s, -c, s];
        let mut fact = 1.0;
        let mut taylor = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
            }
            taylor.push(cycle[k % 4] / fact);
        }
        self.compose(&taylor)
    }
}

/// Lifts a point to jets carrying one fresh direction `v`, evaluates `f`, and
/// returns the directional derivative of `f` along `v`. Both `p` and `v` may
/// themselves be jets, so nesting yields exact higher-order derivatives.
pub fn directional_derivative<F>(f: F, p: &[Jet], v: &[Jet]) -> Vec<Jet>
where
    F: Fn(&[Jet]) -> Vec<Jet>,
{
    // All inputs must sit at a common depth so the fresh direction lands on
    // the same coefficient slot in every coordinate.
    let depth = p
        .iter()
        .chain(v.iter())
        .map(|j| j.depth())
        .max()
        .unwrap_or(0);
    let lifted: Vec<Jet> = p
        .iter()
        .zip(v.iter())
        .map(|(pi, vi)| pad_to(pi, depth).extend(&pad_to(vi, depth)))
        .collect();
    f(&lifted)
        .into_iter()
        .map(|w| pad_to(&w, depth + 1).split_top().1)
        .collect()
}

fn pad_to(j: &Jet, depth: usize) -> Jet {
    let len = 1usize << depth;
    if j.c.len() >= len {
        return j.clone();
    }
    let mut c = SmallVec::from_elem(0.0, len);
    c[..j.c.len()].copy_from_slice(&j.c);
    Jet { c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn var(v: f64) -> Jet {
        // Depth-1 jet seeded as a variable.
        Jet::constant(v).extend(&Jet::constant(1.0))
    }

    #[test]
    fn first_derivatives_match_calculus() {
        let x = var(0.7);
        let y = &(&x.sin() * &x.cos()) / &x.sqrt();
        // f = sin x cos x / sqrt x; f' computed by hand.
        let v: f64 = 0.7;
        let f = v.sin() * v.cos() / v.sqrt();
        let fp = ((v.cos().powi(2) - v.sin().powi(2)) * v.sqrt()
            - v.sin() * v.cos() * 0.5 / v.sqrt())
            / v;
        assert_relative_eq!(y.value(), f, max_relative = 1e-14);
        assert_relative_eq!(y.split_top().1.value(), fp, max_relative = 1e-13);
    }

    #[test]
    fn nested_directional_derivatives_are_exact() {
        // f(x0, x1) = (x0^2 * sin(x1), sqrt(x0) + x1^3)
        let f = |p: &[Jet]| -> Vec<Jet> {
            vec![
                &(&p[0] * &p[0]) * &p[1].sin(),
                &p[0].sqrt() + &(&(&p[1] * &p[1]) * &p[1]),
            ]
        };
        let p = vec![Jet::constant(1.3), Jet::constant(0.4)];
        let e0 = vec![Jet::constant(1.0), Jet::constant(0.0)];
        let e1 = vec![Jet::constant(0.0), Jet::constant(1.0)];
        // d/dx0 then d/dx1 = mixed partial, exact.
        let inner = |q: &[Jet]| {
            directional_derivative(f, q, &[Jet::constant(1.0), Jet::constant(0.0)])
        };
        let mixed = directional_derivative(inner, &p, &e1);
        // d2/dx0 dx1 of x0^2 sin x1 = 2 x0 cos x1
        assert_relative_eq!(mixed[0].value(), 2.0 * 1.3 * 0.4_f64.cos(), max_relative = 1e-14);
        assert_relative_eq!(mixed[1].value(), 0.0, epsilon = 1e-15);
        let first = directional_derivative(f, &p, &e0);
        assert_relative_eq!(first[1].value(), 0.5 / 1.3_f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn division_and_sqrt_roundtrip() {
        let x = var(2.31);
        let y = &x / &x.sqrt();
        let z = &y * &y; // should equal x
        assert_relative_eq!(z.value(), 2.31, max_relative = 1e-14);
        assert_relative_eq!(z.split_top().1.value(), 1.0, max_relative = 1e-13);
    }
}
