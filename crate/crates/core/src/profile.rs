//! Smooth one-dimensional profiles with first and second derivatives.

use crate::scalar::Scalar;

/// Value and first two derivatives of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<S: Scalar = f64> {
    pub v: S,
    pub d1: S,
    pub d2: S,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(v: S) -> Self {
        Self {
            v,
            d1: S::zero(),
            d2: S::zero(),
        }
    }

    pub fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + S::lit(2.0) * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    /// `self(a t + b)` seen as a function of `t`.
    pub fn chain_affine(self, a: S) -> Self {
        Self {
            v: self.v,
            d1: self.d1 * a,
            d2: self.d2 * a * a,
        }
    }
}

/// `e^{-1/t}` for `t > 0`, zero otherwise.
fn flat<S: Scalar>(t: S) -> Jet<S> {
    if t <= S::zero() {
        return Jet::constant(S::zero());
    }
    let e = (-t.recip()).exp();
    let t2 = t * t;
    Jet {
        v: e,
        d1: e / t2,
        d2: e * (S::one() - S::lit(2.0) * t) / (t2 * t2),
    }
}

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step<S: Scalar>(t: S) -> Jet<S> {
    if t <= S::zero() {
        return Jet::constant(S::zero());
    }
    if t >= S::one() {
        return Jet::constant(S::one());
    }
    let a = flat(t);
    let mut b = flat(S::one() - t);
    b.d1 = -b.d1;
    let s = a.v + b.v;
    let n = a.d1 * b.v - a.v * b.d1;
    let n1 = a.d2 * b.v - a.v * b.d2;
    let s1 = a.d1 + b.d1;
    Jet {
        v: a.v / s,
        d1: n / (s * s),
        d2: (n1 * s - S::lit(2.0) * n * s1) / (s * s * s),
    }
}

/// Exact maximum of the smooth-step slope (attained at `t = 1/2`).
pub const SMOOTH_STEP_MAX_SLOPE: f64 = 2.0;

/// Symmetric plateau: 1 on `|u| <= inner`, 0 on `|u| >= outer`.
pub fn plateau<S: Scalar>(u: S, inner: S, outer: S) -> Jet<S> {
    let w = outer - inner;
    let sign = if u < S::zero() { -S::one() } else { S::one() };
    let t = (u.abs() - inner) / w;
    let s = smooth_step(t);
    Jet {
        v: S::one() - s.v,
        d1: -s.d1 * sign / w,
        d2: -s.d2 / (w * w),
    }
}

/// Strip profile on `[lo, hi]` with edges of width `edge`: zero outside, one on `[lo+edge, hi-edge]`.
pub fn strip<S: Scalar>(y: S, lo: S, hi: S, edge: S) -> Jet<S> {
    let up = smooth_step((y - lo) / edge).chain_affine(edge.recip());
    let down = smooth_step((hi - y) / edge).chain_affine(-edge.recip());
    up.mul(down)
}

/// The bump template `exp(1 - 1/(1 - r^2))` on the unit disk, with max 1 at the origin.
pub fn bump_template<S: Scalar>(r2: S) -> S {
    if r2 >= S::one() {
        S::zero()
    } else {
        (S::one() - (S::one() - r2).recip()).exp()
    }
}

/// Factor `g` with `grad mu(v) = g * v`, for the template as a function of `v in R^2`.
pub fn bump_template_grad_factor<S: Scalar>(r2: S) -> S {
    if r2 >= S::one() {
        S::zero()
    } else {
        let q = S::one() - r2;
        -S::lit(2.0) * bump_template(r2) / (q * q)
    }
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3`, its derivative and its primitive from 0.
pub fn quintic<S: Scalar>(t: S) -> (S, S, S) {
    let t = t.max(S::zero()).min(S::one());
    let t2 = t * t;
    let t3 = t2 * t;
    let v = t3 * (S::lit(10.0) + t * (S::lit(-15.0) + S::lit(6.0) * t));
    let d = S::lit(30.0) * t2 * (S::one() - t) * (S::one() - t);
    let p = t3 * t * (S::lit(2.5) + t * (S::lit(-3.0) + t));
    (v, d, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> (f64, f64) {
        (
            (f(t + h) - f(t - h)) / (2.0 * h),
            (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h),
        )
    }

    #[test]
    fn smooth_step_derivatives_match_fd() {
        for &t in &[0.05, 0.2, 0.5, 0.7, 0.93] {
            let j = smooth_step(t);
            let (d1, d2) = fd(|s| smooth_step(s).v, t, 1e-4);
            assert!((j.d1 - d1).abs() < 1e-6, "t={t} {} {}", j.d1, d1);
            assert!((j.d2 - d2).abs() < 1e-3, "t={t} {} {}", j.d2, d2);
        }
        assert!((smooth_step(0.5f64).d1 - SMOOTH_STEP_MAX_SLOPE).abs() < 1e-12);
    }

    #[test]
    fn smooth_step_slope_peaks_at_half() {
        let m = (1..1000)
            .map(|i| smooth_step(i as f64 / 1000.0).d1)
            .fold(0.0, f64::max);
        assert!(m <= SMOOTH_STEP_MAX_SLOPE + 1e-12);
    }

    #[test]
    fn plateau_and_strip() {
        assert_eq!(plateau(0.01, 0.05, 0.2).v, 1.0);
        assert_eq!(plateau(-0.3, 0.05, 0.2).v, 0.0);
        let j = plateau(-0.1, 0.05, 0.2);
        let (d1, _) = fd(|u| plateau(u, 0.05, 0.2).v, -0.1, 1e-6);
        assert!((j.d1 - d1).abs() < 1e-6);
        let j = strip(0.27, 0.25, 0.75, 0.05);
        let (d1, d2) = fd(|y| strip(y, 0.25, 0.75, 0.05).v, 0.27, 1e-5);
        assert!((j.d1 - d1).abs() < 1e-5);
        assert!((j.d2 - d2).abs() < 1e-1 * (1.0 + d2.abs()) * 1e-2);
        assert_eq!(strip(0.5, 0.25, 0.75, 0.05).v, 1.0);
        assert_eq!(strip(0.8, 0.25, 0.75, 0.05).v, 0.0);
    }

    #[test]
    fn bump_template_shape() {
        assert_eq!(bump_template(0.0f64), 1.0);
        assert_eq!(bump_template(1.0f64), 0.0);
        assert!(bump_template(0.999f64) < 1e-200);
        let r2: f64 = 0.3;
        let h = 1e-6;
        let d = (bump_template(r2 + h) - bump_template(r2 - h)) / (2.0 * h);
        // d/d(r2) = factor / 2
        assert!((d - bump_template_grad_factor(r2) / 2.0).abs() < 1e-8);
    }

    #[test]
    fn quintic_primitive() {
        let (v, d, p) = quintic(1.0f64);
        assert_eq!(v, 1.0);
        assert_eq!(d, 0.0);
        assert!((p - 0.5).abs() < 1e-15);
        let n = 20000;
        let integral: f64 = (0..n)
            .map(|i| quintic((i as f64 + 0.5) / n as f64 * 0.6).0 * 0.6 / n as f64)
            .sum();
        assert!((integral - quintic(0.6).2).abs() < 1e-9);
    }
}
