//! 2x2 matrices with a closed-form spectral norm.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mat2<S: Scalar = f64> {
    pub a: S,
    pub b: S,
    pub c: S,
    pub d: S,
}

impl<S: Scalar> Mat2<S> {
    pub const fn new(a: S, b: S, c: S, d: S) -> Self {
        Self { a, b, c, d }
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::one())
    }

    pub fn det(&self) -> S {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> S {
        self.a + self.d
    }

    pub fn scale(&self, s: S) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }

    pub fn apply(&self, v: (S, S)) -> (S, S) {
        (self.a * v.0 + self.b * v.1, self.c * v.0 + self.d * v.1)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Largest singular value, `sqrt((F + sqrt(F^2 - 4 det^2)) / 2)` with `F` the Frobenius square.
    pub fn norm2(&self) -> S {
        let two = S::lit(2.0);
        // s_max = (sqrt(q1) + sqrt(q2)) / 2 avoids cancellation for nearly singular input.
        let q1 = (self.a + self.d).powi(2) + (self.c - self.b).powi(2);
        let q2 = (self.a - self.d).powi(2) + (self.c + self.b).powi(2);
        (q1.sqrt() + q2.sqrt()) / two
    }

    /// Smallest singular value.
    pub fn norm2_min(&self) -> S {
        let two = S::lit(2.0);
        let q1 = (self.a + self.d).powi(2) + (self.c - self.b).powi(2);
        let q2 = (self.a - self.d).powi(2) + (self.c + self.b).powi(2);
        (q1.sqrt() - q2.sqrt()).abs() / two
    }

    /// Eigenvalues when real, sorted by modulus.
    pub fn real_eigenvalues(&self) -> Option<(S, S)> {
        let t = self.trace();
        let disc = t * t - S::lit(4.0) * self.det();
        if disc < S::zero() {
            return None;
        }
        let r = disc.sqrt();
        let two = S::lit(2.0);
        let (l1, l2) = ((t - r) / two, (t + r) / two);
        if l1.abs() <= l2.abs() {
            Some((l1, l2))
        } else {
            Some((l2, l1))
        }
    }

    /// QR factorisation by a Givens rotation: returns `(Q, R)` with `R` upper triangular.
    pub fn qr(&self) -> (Self, Self) {
        let r = self.a.hypot(self.c);
        if r == S::zero() {
            return (Self::identity(), *self);
        }
        let (cs, sn) = (self.a / r, self.c / r);
        let q = Self::new(cs, -sn, sn, cs);
        let rr = Self::new(
            r,
            cs * self.b + sn * self.d,
            S::zero(),
            -sn * self.b + cs * self.d,
        );
        (q, rr)
    }

    pub fn cast<T: Scalar>(&self) -> Mat2<T> {
        Mat2::new(
            T::lit(self.a.to_f64_lossy()),
            T::lit(self.b.to_f64_lossy()),
            T::lit(self.c.to_f64_lossy()),
            T::lit(self.d.to_f64_lossy()),
        )
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> S {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }
}

impl<S: Scalar> Mul for Mat2<S> {
    type Output = Mat2<S>;
    fn mul(self, o: Self) -> Self {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

/// Running product `J_n ... J_1` kept as `Q * exp(log_scale) * R` to avoid overflow.
#[derive(Debug, Clone, Copy)]
pub struct JacobianChain<S: Scalar = f64> {
    m: Mat2<S>,
    log_scale: f64,
    steps: usize,
    renorm_every: usize,
}

impl<S: Scalar> JacobianChain<S> {
    pub fn new(renorm_every: usize) -> Self {
        Self {
            m: Mat2::identity(),
            log_scale: 0.0,
            steps: 0,
            renorm_every: renorm_every.max(1),
        }
    }

    /// Left-multiplies by the next Jacobian.
    pub fn push(&mut self, j: Mat2<S>) {
        self.m = j * self.m;
        self.steps += 1;
        if self.steps % self.renorm_every == 0 {
            self.renormalize();
        }
    }

    fn renormalize(&mut self) {
        let (q, r) = self.m.qr();
        let s = r.max_abs();
        if s > S::zero() && s.is_finite() {
            self.log_scale += s.to_f64_lossy().ln();
            self.m = q * r.scale(S::one() / s);
        }
    }

    /// `log ||product||_2`.
    pub fn log_norm(&self) -> f64 {
        self.m.norm2().to_f64_lossy().ln() + self.log_scale
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
