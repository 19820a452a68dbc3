//! Lifted annulus maps: evaluation, Jacobians, composition and iteration.

mod families;
pub mod spec;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::cover::CoverPoint;
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::scalar::Scalar;

pub use families::*;
pub use spec::{MapSpec, Stage};

/// Coordinates beyond this magnitude are reported as overflow.
pub const OVERFLOW_LIMIT: f64 = 1e12;

/// A lift of an annulus map, commuting with the unit deck translation.
pub trait CoverMap<S: Scalar>: Send + Sync {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S>;

    /// Image together with the analytic Jacobian, if the family has one.
    fn eval_jacobian(&self, _p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        None
    }
}

struct FnMap<F>(F);

impl<S: Scalar, F> CoverMap<S> for FnMap<F>
where
    F: Fn(CoverPoint<S>) -> CoverPoint<S> + Send + Sync,
{
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        (self.0)(p)
    }
}

struct FnMapJ<F, J>(F, J);

impl<S: Scalar, F, J> CoverMap<S> for FnMapJ<F, J>
where
    F: Fn(CoverPoint<S>) -> CoverPoint<S> + Send + Sync,
    J: Fn(CoverPoint<S>) -> Mat2<S> + Send + Sync,
{
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        (self.0)(p)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        Some(((self.0)(p), (self.1)(p)))
    }
}

/// Shared, immutable handle to a lifted map with a label and its parameters.
#[derive(Clone)]
pub struct LiftedMap<S: Scalar = f64> {
    inner: Arc<dyn CoverMap<S>>,
    analytic: bool,
    label: String,
    params: BTreeMap<String, f64>,
}

impl<S: Scalar> fmt::Debug for LiftedMap<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiftedMap")
            .field("label", &self.label)
            .field("analytic", &self.analytic)
            .field("params", &self.params)
            .finish()
    }
}

/// Central-difference step: `1e-6` in double precision, `eps^(1/3)` for coarser types.
pub fn fd_step<S: Scalar>() -> S {
    let e = S::eps_f64();
    if e < 1e-12 {
        S::lit(1e-6)
    } else {
        S::lit(e.cbrt())
    }
}

impl<S: Scalar> LiftedMap<S> {
    /// Wraps a family; `analytic` declares that `eval_jacobian` returns `Some`.
    pub fn from_family(label: impl Into<String>, family: impl CoverMap<S> + 'static, analytic: bool) -> Self {
        Self {
            inner: Arc::new(family),
            analytic,
            label: label.into(),
            params: BTreeMap::new(),
        }
    }

    /// Map given by a closure; Jacobians come from finite differences.
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(CoverPoint<S>) -> CoverPoint<S> + Send + Sync + 'static,
    {
        Self::from_family(label, FnMap(f), false)
    }

    /// Map given by a closure and its analytic Jacobian.
    pub fn from_fn_jacobian<F, J>(label: impl Into<String>, f: F, j: J) -> Self
    where
        F: Fn(CoverPoint<S>) -> CoverPoint<S> + Send + Sync + 'static,
        J: Fn(CoverPoint<S>) -> Mat2<S> + Send + Sync + 'static,
    {
        Self::from_family(label, FnMapJ(f, j), true)
    }

    pub fn with_param(mut self, name: impl Into<String>, value: f64) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn with_params(mut self, params: impl IntoIterator<Item = (String, f64)>) -> Self {
        self.params.extend(params);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic
    }

    #[inline]
    pub fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        self.inner.eval(p)
    }

    /// Image and Jacobian, analytic when available.
    pub fn eval_jacobian(&self, p: CoverPoint<S>) -> (CoverPoint<S>, Mat2<S>) {
        if self.analytic {
            if let Some(r) = self.inner.eval_jacobian(p) {
                return r;
            }
        }
        (self.eval(p), self.fd_jacobian(p, fd_step()))
    }

    pub fn jacobian(&self, p: CoverPoint<S>) -> Mat2<S> {
        self.eval_jacobian(p).1
    }

    /// Central finite-difference Jacobian with step `h`.
    pub fn fd_jacobian(&self, p: CoverPoint<S>, h: S) -> Mat2<S> {
        let two_h = h + h;
        let fxp = self.eval(CoverPoint::new(p.x + h, p.y));
        let fxm = self.eval(CoverPoint::new(p.x - h, p.y));
        let fyp = self.eval(CoverPoint::new(p.x, p.y + h));
        let fym = self.eval(CoverPoint::new(p.x, p.y - h));
        Mat2::new(
            (fxp.x - fxm.x) / two_h,
            (fyp.x - fym.x) / two_h,
            (fxp.y - fxm.y) / two_h,
            (fyp.y - fym.y) / two_h,
        )
    }

    /// Orbit `[p, F(p), ..., F^n(p)]` on the cover.
    pub fn iterate(&self, p: CoverPoint<S>, n: usize) -> Result<Vec<CoverPoint<S>>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(p);
        let mut q = p;
        for step in 1..=n {
            q = self.eval(q);
            check_overflow(q, step)?;
            out.push(q);
        }
        Ok(out)
    }

    /// `F^n(p)` without storing the orbit.
    pub fn iterate_to(&self, p: CoverPoint<S>, n: usize) -> Result<CoverPoint<S>> {
        let mut q = p;
        for step in 1..=n {
            q = self.eval(q);
            check_overflow(q, step)?;
        }
        Ok(q)
    }

    /// `F^n(p)` and `DF^n(p)`.
    pub fn iterate_jacobian(&self, p: CoverPoint<S>, n: usize) -> Result<(CoverPoint<S>, Mat2<S>)> {
        let mut q = p;
        let mut m = Mat2::identity();
        for step in 1..=n {
            let (q2, j) = self.eval_jacobian(q);
            check_overflow(q2, step)?;
            q = q2;
            m = j * m;
        }
        Ok((q, m))
    }

    /// The `k`-th iterate as a map.
    pub fn power(&self, k: usize) -> LiftedMap<S> {
        let label = format!("{}^{}", self.label, k);
        LiftedMap {
            inner: Arc::new(Power {
                base: self.clone(),
                k,
            }),
            analytic: self.analytic,
            label,
            params: self.params.clone(),
        }
    }

    /// The lift `F + k` of the same annulus map.
    pub fn deck_shifted(&self, k: i64) -> LiftedMap<S> {
        let base = self.clone();
        let shift = S::lit(k as f64);
        let label = format!("{}{:+}", self.label, k);
        LiftedMap {
            inner: Arc::new(Shifted { base, shift }),
            analytic: self.analytic,
            label,
            params: self.params.clone(),
        }
    }

    /// Solves `F(p) = q` by damped Newton from the guess `q - (F(q) - q)`.
    pub fn inverse(&self, q: CoverPoint<S>, tol: S) -> Result<CoverPoint<S>> {
        let fq = self.eval(q);
        let mut p = CoverPoint::new(q.x - (fq.x - q.x), q.y - (fq.y - q.y));
        for _ in 0..60 {
            let (fp, j) = self.eval_jacobian(p);
            let r = fp - q;
            if r.x.abs().max(r.y.abs()) <= tol {
                return Ok(p);
            }
            let det = j.det();
            if det == S::zero() || !det.is_finite() {
                break;
            }
            let dx = (j.d * r.x - j.b * r.y) / det;
            let dy = (-j.c * r.x + j.a * r.y) / det;
            let mut t = S::one();
            let base = r.x.abs().max(r.y.abs());
            loop {
                let cand = CoverPoint::new(p.x - t * dx, p.y - t * dy);
                let rc = self.eval(cand) - q;
                if rc.x.abs().max(rc.y.abs()) < base || t < S::lit(1e-4) {
                    p = cand;
                    break;
                }
                t = t * S::lit(0.5);
            }
        }
        let r = self.eval(p) - q;
        if r.x.abs().max(r.y.abs()) <= tol {
            Ok(p)
        } else {
            Err(Error::NoConvergence {
                x: q.x.to_f64_lossy(),
                y: q.y.to_f64_lossy(),
            })
        }
    }
}

fn check_overflow<S: Scalar>(q: CoverPoint<S>, step: usize) -> Result<()> {
    let lim = S::lit(OVERFLOW_LIMIT);
    if !q.is_finite() || q.x.abs() > lim || q.y.abs() > lim {
        return Err(Error::Overflow { step });
    }
    Ok(())
}

struct Composite<S: Scalar> {
    outer: LiftedMap<S>,
    inner: LiftedMap<S>,
}

impl<S: Scalar> CoverMap<S> for Composite<S> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        self.outer.eval(self.inner.eval(p))
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let (q, ji) = self.inner.eval_jacobian(p);
        let (r, jo) = self.outer.eval_jacobian(q);
        Some((r, jo * ji))
    }
}

struct Power<S: Scalar> {
    base: LiftedMap<S>,
    k: usize,
}

impl<S: Scalar> CoverMap<S> for Power<S> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        (0..self.k).fold(p, |q, _| self.base.eval(q))
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let mut q = p;
        let mut m = Mat2::identity();
        for _ in 0..self.k {
            let (q2, j) = self.base.eval_jacobian(q);
            q = q2;
            m = j * m;
        }
        Some((q, m))
    }
}

struct Shifted<S: Scalar> {
    base: LiftedMap<S>,
    shift: S,
}

impl<S: Scalar> CoverMap<S> for Shifted<S> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        let q = self.base.eval(p);
        CoverPoint::new(q.x + self.shift, q.y)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let (q, j) = self.base.eval_jacobian(p);
        Some((CoverPoint::new(q.x + self.shift, q.y), j))
    }
}

/// `outer o inner`, Jacobian by the chain rule.
pub fn compose<S: Scalar>(outer: &LiftedMap<S>, inner: &LiftedMap<S>) -> LiftedMap<S> {
    let mut params = inner.params.clone();
    for (k, v) in &outer.params {
        params.insert(k.clone(), *v);
    }
    LiftedMap {
        analytic: outer.analytic && inner.analytic,
        label: format!("{}∘{}", outer.label, inner.label),
        params,
        inner: Arc::new(Composite {
            outer: outer.clone(),
            inner: inner.clone(),
        }),
    }
}

/// Composes right to left: `chain[0] o chain[1] o ... o chain[k-1]`.
pub fn compose_all<S: Scalar>(chain: &[LiftedMap<S>]) -> Option<LiftedMap<S>> {
    let mut it = chain.iter().rev();
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, m| compose(m, &acc)))
}

/// Sampled C^1 distance: `max |F - G| + max ||DF - DG||_2` over the given points.
pub fn c1_distance<S: Scalar>(f: &LiftedMap<S>, g: &LiftedMap<S>, points: &[CoverPoint<S>]) -> f64 {
    let mut c0 = 0.0f64;
    let mut c1 = 0.0f64;
    for &p in points {
        let (fp, jf) = f.eval_jacobian(p);
        let (gp, jg) = g.eval_jacobian(p);
        c0 = c0.max((fp.x - gp.x).abs().max((fp.y - gp.y).abs()).to_f64_lossy());
        c1 = c1.max(jf.sub(&jg).norm2().to_f64_lossy());
    }
    c0 + c1
}

/// Maximum deck-commutation defect `|F(p + 1) - F(p) - (1, 0)|` over the given points.
pub fn deck_defect<S: Scalar>(f: &LiftedMap<S>, points: &[CoverPoint<S>]) -> f64 {
    points
        .iter()
        .map(|&p| {
            let a = f.eval(p);
            let b = f.eval(CoverPoint::new(p.x + S::one(), p.y));
            ((b.x - a.x - S::one()).abs().max((b.y - a.y).abs())).to_f64_lossy()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twist_iteration_examples() {
        let t = integrable_twist::<f64>();
        let o = t.iterate(CoverPoint::new(0.0, 1.0), 4).unwrap();
        let xs: Vec<f64> = o.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let o = t.iterate(CoverPoint::new(0.0, 0.25), 8).unwrap();
        assert_eq!(o[8].x, 2.0);
        let id = identity::<f64>();
        let o = id.iterate(CoverPoint::new(0.3, -0.7), 7).unwrap();
        assert!(o.iter().all(|&q| q == CoverPoint::new(0.3, -0.7)));
    }

    #[test]
    fn overflow_is_signalled() {
        let t = integrable_twist::<f64>();
        let e = t.iterate(CoverPoint::new(0.0, 1e11), 20).unwrap_err();
        assert!(matches!(e, Error::Overflow { step: 11 }));
    }

    #[test]
    fn composition_examples() {
        let t = integrable_twist::<f64>();
        let c = compose(&identity(), &t);
        assert_eq!(c.eval(CoverPoint::new(0.0, 1.0)), CoverPoint::new(1.0, 1.0));
        let tt = compose(&t, &t);
        let j = tt.jacobian(CoverPoint::new(0.37, -1.2));
        assert_eq!(j, Mat2::new(1.0, 2.0, 0.0, 1.0));
        let all = compose_all(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert_eq!(all.jacobian(CoverPoint::new(0.0, 0.0)).b, 3.0);
    }

    #[test]
    fn power_matches_chained_jacobian() {
        let t = integrable_twist::<f64>();
        let p = t.power(5);
        let (q, j) = p.eval_jacobian(CoverPoint::new(0.1, 0.2));
        assert!((q.x - 1.1).abs() < 1e-15);
        assert_eq!(j.b, 5.0);
    }

    #[test]
    fn fd_jacobian_of_twist() {
        let t = integrable_twist::<f64>();
        let j = t.fd_jacobian(CoverPoint::new(0.3, 0.4), 1e-6);
        assert!((j.b - 1.0).abs() < 1e-8 && (j.a - 1.0).abs() < 1e-8);
        let t32 = integrable_twist::<f32>();
        let j = t32.fd_jacobian(CoverPoint::new(0.3, 0.4), fd_step());
        assert!((j.b - 1.0).abs() < 1e-3);
    }

    #[test]
    fn newton_inverse_of_twist() {
        let t = integrable_twist::<f64>();
        let q = CoverPoint::new(3.7, 0.45);
        let p = t.inverse(q, 1e-13).unwrap();
        assert!((p.x - 3.25).abs() < 1e-12 && (p.y - 0.45).abs() < 1e-12);
    }

    #[test]
    fn deck_shift_adds_one() {
        let t = integrable_twist::<f64>().deck_shifted(1);
        assert_eq!(t.eval(CoverPoint::new(0.0, 0.5)).x, 1.5);
        assert_eq!(deck_defect(&t, &[CoverPoint::new(0.2, 0.3)]), 0.0);
    }
}
