//! Explicit map families: twist, boundary dynamics, connector shears, bumps, contractions.

use serde::{Deserialize, Serialize};

use super::{compose, compose_all, CoverMap, LiftedMap};
use crate::cover::{circle_diff, wrap_unit, AnnulusPoint, CoverPoint};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::profile::{self, Jet};
use crate::scalar::Scalar;

struct Twist;

impl<S: Scalar> CoverMap<S> for Twist {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        CoverPoint::new(p.x + p.y, p.y)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        Some((self.eval(p), Mat2::new(S::one(), S::one(), S::zero(), S::one())))
    }
}

struct Identity;

impl<S: Scalar> CoverMap<S> for Identity {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        p
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        Some((p, Mat2::identity()))
    }
}

/// `T(x, y) = (x + y, y)`.
pub fn integrable_twist<S: Scalar>() -> LiftedMap<S> {
    LiftedMap::from_family("twist", Twist, true)
}

pub fn identity<S: Scalar>() -> LiftedMap<S> {
    LiftedMap::from_family("identity", Identity, true)
}

/// Partial derivatives of a generating-function perturbation `Psi(x, Y)`.
#[derive(Debug, Clone, Copy)]
pub struct PsiDerivs<S: Scalar> {
    pub x: S,
    pub y: S,
    pub xx: S,
    pub xy: S,
    pub yy: S,
}

impl<S: Scalar> PsiDerivs<S> {
    fn zero() -> Self {
        Self {
            x: S::zero(),
            y: S::zero(),
            xx: S::zero(),
            xy: S::zero(),
            yy: S::zero(),
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            x: self.x + o.x,
            y: self.y + o.y,
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }
}

/// Perturbation term of a generating function `W(x, Y) = xY + Psi(x, Y)`.
///
/// The induced map is `y = Y + Psi_x(x, Y)`, `X = x + Psi_Y(x, Y)`; it preserves area
/// whenever `1 + Psi_xY > 0`.
pub trait GeneratingFunction<S: Scalar>: Send + Sync {
    fn derivs(&self, x: S, y_new: S) -> PsiDerivs<S>;
    /// Upper bound for `|Psi_x|`.
    fn sup_psi_x(&self) -> S;
}

struct GeneratingMap<G>(G);

impl<G> GeneratingMap<G> {
    fn solve<S: Scalar>(&self, p: CoverPoint<S>) -> (S, PsiDerivs<S>)
    where
        G: GeneratingFunction<S>,
    {
        let (x, y) = (p.x, p.y);
        let m = self.0.sup_psi_x() * S::lit(1.0 + 1e-9) + S::epsilon();
        let (mut lo, mut hi) = (y - m, y + m);
        let mut yn = y;
        let tol = S::lit(2.0) * S::epsilon() * (S::one() + y.abs());
        let mut d = self.0.derivs(x, yn);
        for _ in 0..80 {
            let g = yn + d.x - y;
            if g.abs() <= tol {
                break;
            }
            if g > S::zero() {
                hi = hi.min(yn);
            } else {
                lo = lo.max(yn);
            }
            let gp = S::one() + d.xy;
            let mut next = yn - g / gp;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = (lo + hi) / S::lit(2.0);
            }
            if next == yn {
                break;
            }
            yn = next;
            d = self.0.derivs(x, yn);
        }
        (yn, d)
    }
}

impl<S: Scalar, G: GeneratingFunction<S>> CoverMap<S> for GeneratingMap<G> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        let (yn, d) = self.solve(p);
        CoverPoint::new(p.x + d.y, yn)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let (yn, d) = self.solve(p);
        let inv = (S::one() + d.xy).recip();
        let dyn_dy = inv;
        let dyn_dx = -d.xx * inv;
        let jac = Mat2::new(
            S::one() + d.xy + d.yy * dyn_dx,
            d.yy * dyn_dy,
            dyn_dx,
            dyn_dy,
        );
        Some((CoverPoint::new(p.x + d.y, yn), jac))
    }
}

/// Degree-one circle perturbation `D(x) = -c sin(pi(x - x0)) sin^3(pi(x - p0))`.
///
/// `x0` is a repelling fixed point, `p0` a cubic saddle-node attracting from both sides.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CircleProfile<S: Scalar = f64> {
    pub amplitude: S,
    pub repeller: S,
    pub saddle_node: S,
}

impl<S: Scalar> CircleProfile<S> {
    /// `max |D'| / amplitude`.
    pub const SLOPE_FACTOR: f64 = std::f64::consts::PI;

    pub fn new(amplitude: S, repeller: S, saddle_node: S) -> Result<Self> {
        let (x0, p0) = (wrap_unit(repeller), wrap_unit(saddle_node));
        if x0 == p0 {
            return Err(Error::InvalidParams("repeller and saddle-node coincide".into()));
        }
        if amplitude < S::zero() || amplitude.to_f64_lossy() * Self::SLOPE_FACTOR >= 0.5 {
            return Err(Error::InvalidParams(format!(
                "circle amplitude {amplitude} outside [0, 0.5/pi)"
            )));
        }
        Ok(Self {
            amplitude,
            repeller: x0,
            saddle_node: p0,
        })
    }

    fn repeller_rep(&self) -> S {
        if self.repeller < self.saddle_node {
            self.repeller
        } else {
            self.repeller - S::one()
        }
    }

    /// `D`, `D'`, `D''` at `x`.
    pub fn jet(&self, x: S) -> Jet<S> {
        let pi = S::PI();
        let a = pi * (x - self.repeller_rep());
        let b = pi * (x - self.saddle_node);
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let c = self.amplitude;
        let sb2 = sb * sb;
        let three = S::lit(3.0);
        let f = sa * sb2 * sb;
        let f1 = pi * (ca * sb2 * sb + three * sa * sb2 * cb);
        let f2 = pi
            * pi
            * (-sa * sb2 * sb + S::lit(6.0) * ca * sb2 * cb + three * sa * (S::lit(2.0) * sb * cb * cb - sb2 * sb));
        Jet {
            v: -c * f,
            d1: -c * f1,
            d2: -c * f2,
        }
    }

    /// One step of the circle map `x + D(x)`.
    pub fn circle_step(&self, x: S) -> S {
        x + self.jet(x).v
    }
}

/// Collar perturbation around the circle `y = height`: `Psi = U rho(U) D(x)`, `U = Y - height`.
#[derive(Debug, Clone, Copy)]
struct CollarPsi<S: Scalar> {
    height: S,
    profile: CircleProfile<S>,
    inner: S,
    outer: S,
}

impl<S: Scalar> GeneratingFunction<S> for CollarPsi<S> {
    fn derivs(&self, x: S, y_new: S) -> PsiDerivs<S> {
        let u = y_new - self.height;
        if u.abs() >= self.outer {
            return PsiDerivs::zero();
        }
        let r = profile::plateau(u, self.inner, self.outer);
        let d = self.profile.jet(x);
        let q = r.v + u * r.d1;
        let q1 = S::lit(2.0) * r.d1 + u * r.d2;
        PsiDerivs {
            x: u * r.v * d.d1,
            y: q * d.v,
            xx: u * r.v * d.d2,
            xy: q * d.d1,
            yy: q1 * d.v,
        }
    }
    fn sup_psi_x(&self) -> S {
        self.outer * self.profile.amplitude * S::PI()
    }
}

/// Parameters of the boundary Morse-Smale map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryParams {
    /// Repelling fixed point on the lower circle.
    pub x0: f64,
    /// Saddle-node on the lower circle.
    pub p0: f64,
    pub x1: f64,
    pub p1: f64,
    /// Amplitude of both circle profiles.
    pub amplitude: f64,
    /// Collar plateau half-width.
    pub collar_inner: f64,
    /// Collar support half-width.
    pub collar_outer: f64,
    /// Exterior contraction strength `a`: far from the band `y -> y - a (y - 1)` above, symmetric below.
    pub exterior_strength: f64,
    pub exterior_width: f64,
    /// Optional bound on the measured C^1 distance of the collar perturbations.
    #[serde(default)]
    pub c1_budget: Option<f64>,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            x0: 0.0,
            p0: 0.5,
            x1: 0.5,
            p1: 0.0,
            amplitude: 0.004,
            collar_inner: 0.04,
            collar_outer: 0.12,
            exterior_strength: 0.25,
            exterior_width: 0.02,
            c1_budget: None,
        }
    }
}

/// Collar perturbation as a standalone area-preserving map.
pub fn collar_perturbation<S: Scalar>(height: S, profile: CircleProfile<S>, inner: S, outer: S) -> Result<LiftedMap<S>> {
    if !(inner >= S::zero() && outer > inner) {
        return Err(Error::InvalidParams("collar requires 0 <= inner < outer".into()));
    }
    let psi = CollarPsi {
        height,
        profile,
        inner,
        outer,
    };
    Ok(LiftedMap::from_family("collar", GeneratingMap(psi), true)
        .with_param("height", height.to_f64_lossy())
        .with_param("amplitude", profile.amplitude.to_f64_lossy()))
}

/// Vertical map `(x, y) -> (x, phi(y))` given a jet of `phi`.
struct Vertical<F>(F);

impl<S: Scalar, F: Fn(S) -> (S, S) + Send + Sync> CoverMap<S> for Vertical<F> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        CoverPoint::new(p.x, (self.0)(p.y).0)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let (v, d) = (self.0)(p.y);
        Some((CoverPoint::new(p.x, v), Mat2::new(S::one(), S::zero(), S::zero(), d)))
    }
}

/// `t S(t/w)` for `t > 0`, zero otherwise; exactly linear for `t >= w`.
fn soft_ramp<S: Scalar>(t: S, w: S) -> (S, S) {
    if t <= S::zero() {
        return (S::zero(), S::zero());
    }
    let s = profile::smooth_step(t / w);
    (t * s.v, s.v + t / w * s.d1)
}

/// Maximum slope of `soft_ramp`, a safety bound for the exterior strength.
pub fn soft_ramp_max_slope() -> f64 {
    (0..=2000)
        .map(|i| soft_ramp(i as f64 / 2000.0, 1.0).1)
        .fold(0.0, f64::max)
}

/// Vertical contraction of the exterior of `[0, 1]`; identity on `[0, 1]`.
pub fn exterior_dissipation<S: Scalar>(strength: S, width: S) -> Result<LiftedMap<S>> {
    let s = strength.to_f64_lossy();
    if !(s > 0.0 && s * soft_ramp_max_slope() < 1.0) || !(width > S::zero()) {
        return Err(Error::InvalidParams(format!(
            "exterior strength {s} must lie in (0, {:.4})",
            1.0 / soft_ramp_max_slope()
        )));
    }
    let f = move |y: S| {
        let (up, dup) = soft_ramp(y - S::one(), width);
        let (dn, ddn) = soft_ramp(-y, width);
        (y - strength * up + strength * dn, S::one() - strength * (dup + ddn))
    };
    Ok(LiftedMap::from_family("exterior", Vertical(f), true)
        .with_param("exterior_strength", s)
        .with_param("exterior_width", width.to_f64_lossy()))
}

/// The boundary map `f1 = V o P1 o P0 o T`.
///
/// `P0` and `P1` are area-preserving collar perturbations making the boundary circles carry
/// a repeller and a saddle-node; `V` contracts the exterior of the band.
pub fn boundary_morse_smale<S: Scalar>(params: &BoundaryParams) -> Result<LiftedMap<S>> {
    if !(params.collar_outer > 0.0 && params.collar_outer < 0.5) {
        return Err(Error::InvalidParams(
            "collar neighbourhoods of the two boundary circles overlap".into(),
        ));
    }
    let lit = S::lit;
    let c0 = CircleProfile::new(lit(params.amplitude), lit(params.x0), lit(params.p0))?;
    let c1 = CircleProfile::new(lit(params.amplitude), lit(params.x1), lit(params.p1))?;
    let p0 = collar_perturbation(S::zero(), c0, lit(params.collar_inner), lit(params.collar_outer))?;
    let p1 = collar_perturbation(S::one(), c1, lit(params.collar_inner), lit(params.collar_outer))?;
    if let Some(budget) = params.c1_budget {
        let pp = compose(&p1, &p0);
        let d = super::c1_distance(&pp, &identity(), &collar_samples::<S>(params.collar_outer));
        if d > budget {
            return Err(Error::InvalidParams(format!(
                "boundary perturbation C^1 size {d:.3e} exceeds budget {budget:.3e}"
            )));
        }
    }
    let v = exterior_dissipation(lit(params.exterior_strength), lit(params.exterior_width))?;
    let f1 = compose_all(&[v, p1, p0, integrable_twist()]).expect("non-empty chain");
    Ok(f1.with_label("f1").with_params([
        ("x0".to_string(), params.x0),
        ("p0".to_string(), params.p0),
        ("x1".to_string(), params.x1),
        ("p1".to_string(), params.p1),
        ("boundary_amplitude".to_string(), params.amplitude),
    ]))
}

/// Sample grid covering both collars, used for C^1 measurements.
pub fn collar_samples<S: Scalar>(outer: f64) -> Vec<CoverPoint<S>> {
    let mut pts = Vec::new();
    for h in [0.0, 1.0] {
        for i in 0..96 {
            for j in 0..=40 {
                let x = i as f64 / 96.0;
                let y = h - outer + 2.0 * outer * j as f64 / 40.0;
                pts.push(CoverPoint::new(S::lit(x), S::lit(y)));
            }
        }
    }
    pts
}

/// One connector strip: `Psi = A / (4 pi^2) cos(2 pi (x - phase)) sigma(Y)` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strip {
    pub lo: f64,
    pub hi: f64,
    pub edge: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Parameters of the connector shear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorParams {
    pub strips: Vec<Strip>,
    /// Open range `(r1, r2)` that must contain every strip.
    pub range: (f64, f64),
    #[serde(default)]
    pub c1_budget: Option<f64>,
}

struct StripPsi<S: Scalar> {
    strips: Vec<[S; 5]>,
}

impl<S: Scalar> GeneratingFunction<S> for StripPsi<S> {
    fn derivs(&self, x: S, y_new: S) -> PsiDerivs<S> {
        let two_pi = S::TAU();
        let mut acc = PsiDerivs::zero();
        for &[lo, hi, edge, amp, phase] in &self.strips {
            if y_new <= lo || y_new >= hi {
                continue;
            }
            let s = profile::strip(y_new, lo, hi, edge);
            let (sn, cs) = (two_pi * (x - phase)).sin_cos();
            let a0 = amp / (two_pi * two_pi);
            let a1 = amp / two_pi;
            acc = acc.add(PsiDerivs {
                x: -a1 * sn * s.v,
                y: a0 * cs * s.d1,
                xx: -amp * cs * s.v,
                xy: -a1 * sn * s.d1,
                yy: a0 * cs * s.d2,
            });
        }
        acc
    }
    fn sup_psi_x(&self) -> S {
        self.strips
            .iter()
            .map(|s| s[3].abs() / S::TAU())
            .fold(S::zero(), |a, b| a + b)
    }
}

fn check_strip(s: &Strip) -> Result<()> {
    if !(s.hi - s.lo >= 2.0 * s.edge && s.edge > 0.0) {
        return Err(Error::InvalidParams(format!(
            "strip [{}, {}] is narrower than twice its edge {}",
            s.lo, s.hi, s.edge
        )));
    }
    let twist = s.amplitude.abs() * profile::SMOOTH_STEP_MAX_SLOPE / (s.edge * std::f64::consts::TAU);
    if twist >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "strip [{}, {}]: amplitude {} folds the generating function (|A sigma'|/2pi = {twist:.3})",
            s.lo, s.hi, s.amplitude
        )));
    }
    Ok(())
}

fn check_disjoint(strips: &[Strip]) -> Result<()> {
    let mut sorted = strips.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in sorted.windows(2) {
        if w[0].hi > w[1].lo {
            return Err(Error::InvalidParams(format!(
                "strips [{}, {}] and [{}, {}] overlap",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
    }
    Ok(())
}

impl ConnectorParams {
    pub fn validate(&self) -> Result<()> {
        let (r1, r2) = self.range;
        if !(0.0 < r1 && r1 < r2 && r2 < 1.0) {
            return Err(Error::InvalidParams(format!("strip range ({r1}, {r2}) must satisfy 0 < r1 < r2 < 1")));
        }
        for s in &self.strips {
            if !(s.lo >= r1 && s.hi <= r2) {
                return Err(Error::InvalidParams(format!(
                    "strip [{}, {}] does not fit in ({r1}, {r2})",
                    s.lo, s.hi
                )));
            }
            check_strip(s)?;
        }
        check_disjoint(&self.strips)
    }
}

/// Area-preserving shear supported in the given strips, with no constraint on where they lie.
pub fn strip_shear<S: Scalar>(strips: &[Strip]) -> Result<LiftedMap<S>> {
    for s in strips {
        check_strip(s)?;
    }
    check_disjoint(strips)?;
    let strips = strips
        .iter()
        .map(|s| [s.lo, s.hi, s.edge, s.amplitude, s.phase].map(S::lit))
        .collect::<Vec<_>>();
    let count = strips.len();
    Ok(LiftedMap::from_family("shear", GeneratingMap(StripPsi { strips }), true).with_param("strip_count", count as f64))
}

/// Area-preserving shear supported in the strips, identity elsewhere.
pub fn connector_shear<S: Scalar>(params: &ConnectorParams) -> Result<LiftedMap<S>> {
    params.validate()?;
    let map = strip_shear(&params.strips)?.with_label("connector");
    if let Some(budget) = params.c1_budget {
        let d = connector_c1_size(&map, params);
        if d > budget {
            return Err(Error::InvalidParams(format!(
                "connector C^1 size {d:.3e} exceeds budget {budget:.3e}"
            )));
        }
    }
    Ok(map)
}

/// Sampled C^1 distance of a connector to the identity over its strips.
pub fn connector_c1_size<S: Scalar>(map: &LiftedMap<S>, params: &ConnectorParams) -> f64 {
    let mut pts = Vec::new();
    for s in &params.strips {
        for i in 0..64 {
            for j in 0..=64 {
                let x = i as f64 / 64.0;
                let y = s.lo + (s.hi - s.lo) * j as f64 / 64.0;
                pts.push(CoverPoint::new(S::lit(x), S::lit(y)));
            }
        }
    }
    super::c1_distance(map, &identity(), &pts)
}

/// Direction of a bump push.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// Bump `amplitude * mu((p - center) / radius)` with the template `exp(1 - 1/(1 - r^2))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct BumpProfile<S: Scalar = f64> {
    pub center: AnnulusPoint<S>,
    pub radius: S,
    pub amplitude: S,
}

impl<S: Scalar> BumpProfile<S> {
    pub fn new(center: AnnulusPoint<S>, radius: S, amplitude: S) -> Result<Self> {
        if !(radius > S::zero() && radius < S::lit(0.5)) || amplitude < S::zero() {
            return Err(Error::InvalidParams("bump needs 0 < radius < 1/2 and amplitude >= 0".into()));
        }
        Ok(Self {
            center,
            radius,
            amplitude,
        })
    }

    /// Scaled offset `(p - center) / radius` using the nearest circle representative.
    fn offset(&self, p: CoverPoint<S>) -> (S, S) {
        (
            circle_diff(p.x, self.center.x) / self.radius,
            (p.y - self.center.y) / self.radius,
        )
    }

    /// Template value at `p`, in `[0, 1]`.
    pub fn value(&self, p: CoverPoint<S>) -> S {
        let (u, v) = self.offset(p);
        profile::bump_template(u * u + v * v)
    }

    pub fn contains(&self, p: CoverPoint<S>) -> bool {
        let (u, v) = self.offset(p);
        u * u + v * v < S::one()
    }
}

struct Bump<S: Scalar> {
    profile: BumpProfile<S>,
    sign: S,
}

impl<S: Scalar> CoverMap<S> for Bump<S> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        let (u, v) = self.profile.offset(p);
        let r2 = u * u + v * v;
        if r2 >= S::one() {
            return p;
        }
        let mu = profile::bump_template(r2);
        CoverPoint::new(p.x, p.y + self.sign * self.profile.amplitude * mu)
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let (u, v) = self.profile.offset(p);
        let r2 = u * u + v * v;
        if r2 >= S::one() {
            return Some((p, Mat2::identity()));
        }
        let mu = profile::bump_template(r2);
        let g = profile::bump_template_grad_factor(r2);
        let k = self.sign * self.profile.amplitude / self.profile.radius;
        Some((
            CoverPoint::new(p.x, p.y + self.sign * self.profile.amplitude * mu),
            Mat2::new(S::one(), S::zero(), k * g * u, S::one() + k * g * v),
        ))
    }
}

/// Vertical push by the bump, up or down; identity outside the open ball.
pub fn bump_push<S: Scalar>(profile: &BumpProfile<S>, direction: Direction) -> LiftedMap<S> {
    let sign = match direction {
        Direction::Up => S::one(),
        Direction::Down => -S::one(),
    };
    let name = match direction {
        Direction::Up => "b0",
        Direction::Down => "b1",
    };
    LiftedMap::from_family(name, Bump { profile: *profile, sign }, true)
        .with_param(format!("{name}_radius"), profile.radius.to_f64_lossy())
        .with_param(format!("{name}_amplitude"), profile.amplitude.to_f64_lossy())
}

/// Shape constants of the vertical contraction `h_n`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContractionShape {
    pub n: u32,
    pub center: f64,
    pub core_slope: f64,
    pub core_half_width: f64,
    pub outer_slope: f64,
    pub support_half_width: f64,
    pub ramp: f64,
}

impl ContractionShape {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("vertical contraction needs n >= 2, got {n}")));
        }
        let nf = n as f64;
        let k = 0.55 / nf;
        let l1 = 1.5;
        let l2 = nf + 0.45;
        let tau = ((l2 - l1) / 10.0).min(1.0);
        let k2 = k * (l1 + tau / 2.0) / (l2 - l1 - tau);
        if k2 >= 1.0 / nf {
            return Err(Error::InvalidParams(format!("contraction return slope {k2} too steep for n = {n}")));
        }
        Ok(Self {
            n,
            center: 0.5,
            core_slope: k,
            core_half_width: l1,
            outer_slope: k2,
            support_half_width: l2,
            ramp: tau,
        })
    }

    /// Displacement `phi(s)` and its derivative for `s = |y - center| >= 0`.
    fn radial(&self, s: f64) -> (f64, f64) {
        let (k, k2, l1, l2, tau) = (
            self.core_slope,
            self.outer_slope,
            self.core_half_width,
            self.support_half_width,
            self.ramp,
        );
        if s <= l1 {
            return (-k * s, -k);
        }
        if s <= l1 + tau {
            let (p, _, big_p) = profile::quintic((s - l1) / tau);
            return (-k * s + (k + k2) * tau * big_p, -k + (k + k2) * p);
        }
        let at_plateau = -k * (l1 + tau) + (k + k2) * tau / 2.0;
        if s <= l2 - tau {
            return (at_plateau + k2 * (s - l1 - tau), k2);
        }
        if s < l2 {
            let base = at_plateau + k2 * (l2 - tau - l1 - tau);
            let t = (s - (l2 - tau)) / tau;
            let (p, _, big_p) = profile::quintic(t);
            return (base + k2 * tau * (t - big_p), k2 * (1.0 - p));
        }
        (0.0, 0.0)
    }

    /// `h_n(y)` and `h_n'(y)`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let u = y - self.center;
        let (phi, dphi) = self.radial(u.abs());
        if u.abs() >= self.support_half_width {
            return (y, 1.0);
        }
        (y + if u < 0.0 { -phi } else { phi }, 1.0 + dphi)
    }
}

/// `h_n(x, y) = (x, h(y))`, contracting towards `y = 1/2` on `[-1, 2]`, identity off `(-n, n + 1)`.
pub fn vertical_contraction<S: Scalar>(n: u32) -> Result<LiftedMap<S>> {
    let shape = ContractionShape::new(n)?;
    let f = move |y: S| {
        let (v, d) = shape.eval(y.to_f64_lossy());
        if v == y.to_f64_lossy() && d == 1.0 {
            (y, S::one())
        } else {
            (S::lit(v), S::lit(d))
        }
    };
    Ok(LiftedMap::from_family(format!("h{n}"), Vertical(f), true).with_param("n", n as f64))
}

/// Piecewise-affine rotational horseshoe model.
///
/// On the fundamental domain starting at `left`, `[left, right]` is stretched onto
/// `[image_left, image_right]` and `[right, left + 1]` folds back; heights contract affinely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineHorseshoeParams {
    pub left: f64,
    pub right: f64,
    pub image_left: f64,
    pub image_right: f64,
    pub contraction: f64,
    pub offset: f64,
}

impl Default for AffineHorseshoeParams {
    fn default() -> Self {
        Self {
            left: 0.2,
            right: 0.8,
            image_left: 0.1,
            image_right: 1.9,
            contraction: 1.0 / 3.0,
            offset: 1.0 / 3.0,
        }
    }
}

impl AffineHorseshoeParams {
    pub fn slopes(&self) -> (f64, f64) {
        let s1 = (self.image_right - self.image_left) / (self.right - self.left);
        let s2 = (self.image_left + 1.0 - self.image_right) / (self.left + 1.0 - self.right);
        (s1, s2)
    }
}

struct AffineHorseshoe<S: Scalar> {
    left: S,
    width: S,
    il: S,
    ir: S,
    s1: S,
    s2: S,
    lam: S,
    off: S,
}

impl<S: Scalar> CoverMap<S> for AffineHorseshoe<S> {
    fn eval(&self, p: CoverPoint<S>) -> CoverPoint<S> {
        self.eval_jacobian(p).expect("analytic").0
    }
    fn eval_jacobian(&self, p: CoverPoint<S>) -> Option<(CoverPoint<S>, Mat2<S>)> {
        let r = p.x - self.left;
        let k = r.floor();
        let u = r - k;
        let (x, s) = if u <= self.width {
            (self.il + self.s1 * u, self.s1)
        } else {
            (self.ir + self.s2 * (u - self.width), self.s2)
        };
        Some((
            CoverPoint::new(x + k, self.off + self.lam * p.y),
            Mat2::new(s, S::zero(), S::zero(), self.lam),
        ))
    }
}

pub fn affine_horseshoe<S: Scalar>(params: &AffineHorseshoeParams) -> Result<LiftedMap<S>> {
    let (s1, s2) = params.slopes();
    if !(params.right > params.left && params.right < params.left + 1.0) || !(s1 > 1.0) || !(params.contraction.abs() < 1.0) {
        return Err(Error::InvalidParams("affine horseshoe needs left < right < left + 1, expansion > 1, |contraction| < 1".into()));
    }
    let l = S::lit;
    Ok(LiftedMap::from_family(
        "affine_horseshoe",
        AffineHorseshoe {
            left: l(params.left),
            width: l(params.right - params.left),
            il: l(params.image_left),
            ir: l(params.image_right),
            s1: l(s1),
            s2: l(s2),
            lam: l(params.contraction),
            off: l(params.offset),
        },
        true,
    )
    .with_param("expansion", s1))
}

/// Sup-norm perturbation shapes used by the robustness probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Constant displacement `eta * (cos a, sin a)`.
    Shift { angle: f64 },
    /// Horizontal wave `eta * sin(2 pi (x - phase))`.
    Wave { phase: f64 },
}

impl Perturbation {
    /// The probing family: four axis shifts and two waves.
    pub fn probe_family() -> Vec<Perturbation> {
        let q = std::f64::consts::FRAC_PI_2;
        vec![
            Perturbation::Shift { angle: 0.0 },
            Perturbation::Shift { angle: q },
            Perturbation::Shift { angle: 2.0 * q },
            Perturbation::Shift { angle: 3.0 * q },
            Perturbation::Wave { phase: 0.0 },
            Perturbation::Wave { phase: 0.5 },
        ]
    }
}

/// `P o F` where `P` moves points by at most `eta`.
pub fn sup_perturbation<S: Scalar>(f: &LiftedMap<S>, eta: f64, kind: Perturbation) -> LiftedMap<S> {
    let e = S::lit(eta);
    let p = match kind {
        Perturbation::Shift { angle } => {
            let (dx, dy) = (S::lit(eta * angle.cos()), S::lit(eta * angle.sin()));
            LiftedMap::from_fn_jacobian(
                "shift",
                move |q: CoverPoint<S>| CoverPoint::new(q.x + dx, q.y + dy),
                |_| Mat2::identity(),
            )
        }
        Perturbation::Wave { phase } => {
            let ph = S::lit(phase);
            LiftedMap::from_fn_jacobian(
                "wave",
                move |q: CoverPoint<S>| CoverPoint::new(q.x + e * (S::TAU() * (q.x - ph)).sin(), q.y),
                move |q: CoverPoint<S>| {
                    Mat2::new(
                        S::one() + e * S::TAU() * (S::TAU() * (q.x - ph)).cos(),
                        S::zero(),
                        S::zero(),
                        S::one(),
                    )
                },
            )
        }
    };
    compose(&p, f).with_label(format!("{}+eta", f.label())).with_param("eta", eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::deck_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, ylo: f64, yhi: f64, seed: u64) -> Vec<CoverPoint<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| CoverPoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(ylo..yhi)))
            .collect()
    }

    fn max_fd_gap(f: &LiftedMap<f64>, pts: &[CoverPoint<f64>]) -> f64 {
        pts.iter()
            .map(|&p| f.jacobian(p).sub(&f.fd_jacobian(p, 1e-6)).max_abs())
            .fold(0.0, f64::max)
    }

    fn test_boundary() -> LiftedMap<f64> {
        boundary_morse_smale(&BoundaryParams::default()).unwrap()
    }

    fn test_connector() -> ConnectorParams {
        ConnectorParams {
            strips: vec![
                Strip { lo: 0.3, hi: 0.45, edge: 0.05, amplitude: 0.02, phase: 0.1 },
                Strip { lo: 0.55, hi: 0.7, edge: 0.05, amplitude: -0.02, phase: 0.6 },
            ],
            range: (0.25, 0.75),
            c1_budget: None,
        }
    }

    #[test]
    fn twist_examples() {
        let t = integrable_twist::<f64>();
        assert_eq!(t.eval(CoverPoint::new(0.0, 0.5)), CoverPoint::new(0.5, 0.5));
        assert_eq!(t.eval(CoverPoint::new(1.0, 0.0)), CoverPoint::new(1.0, 0.0));
        assert_eq!(t.iterate_to(CoverPoint::new(0.0, 1.0), 3).unwrap(), CoverPoint::new(3.0, 1.0));
        for n in [1usize, 10, 100, 1000] {
            let (_, j) = t.iterate_jacobian(CoverPoint::new(0.1, 0.4), n).unwrap();
            let nf = n as f64;
            assert!((j.norm2() - (nf + (nf * nf + 4.0).sqrt()) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn families_commute_with_deck() {
        let pts = random_points(1000, -2.5, 3.5, 7);
        let bump = BumpProfile::new(AnnulusPoint::new(0.3, 0.5), 0.1, 0.01).unwrap();
        let maps = vec![
            test_boundary(),
            connector_shear(&test_connector()).unwrap(),
            bump_push(&bump, Direction::Up),
            vertical_contraction(16).unwrap(),
            affine_horseshoe(&AffineHorseshoeParams::default()).unwrap(),
        ];
        for m in &maps {
            assert!(deck_defect(m, &pts) < 1e-10, "{}", m.label());
        }
    }

    #[test]
    fn analytic_jacobians_match_fd() {
        let pts = random_points(300, -1.5, 2.5, 11);
        let bump = BumpProfile::new(AnnulusPoint::new(0.3, 0.5), 0.1, 0.01).unwrap();
        let mut near_bump = random_points(200, 0.42, 0.58, 12);
        for p in near_bump.iter_mut() {
            p.x = 0.3 + (p.x / 3.0) * 0.1;
        }
        assert!(max_fd_gap(&test_boundary(), &pts) < 1e-6);
        assert!(max_fd_gap(&connector_shear(&test_connector()).unwrap(), &pts) < 1e-6);
        assert!(max_fd_gap(&bump_push(&bump, Direction::Down), &near_bump) < 1e-6);
        assert!(max_fd_gap(&vertical_contraction(4).unwrap(), &random_points(300, -5.0, 6.0, 3)) < 1e-6);
    }

    #[test]
    fn connector_preserves_area_and_support() {
        let c = connector_shear::<f64>(&test_connector()).unwrap();
        let pts = random_points(10_000, 0.2, 0.8, 5);
        for &p in &pts {
            assert!((c.jacobian(p).det() - 1.0).abs() < 1e-10);
        }
        for y in [0.0, 0.1, 0.29, 0.5, 0.71, 0.9] {
            let p = CoverPoint::new(0.37, y);
            assert_eq!(c.eval(p), p);
        }
    }

    #[test]
    fn connector_rejects_bad_params() {
        let mut p = test_connector();
        p.strips[1].lo = 0.4;
        assert!(connector_shear::<f64>(&p).is_err());
        let mut p = test_connector();
        p.strips[0].amplitude = 1.0;
        assert!(connector_shear::<f64>(&p).is_err());
        let mut p = test_connector();
        p.c1_budget = Some(1e-4);
        assert!(connector_shear::<f64>(&p).is_err());
    }

    #[test]
    fn boundary_circles_invariant_with_expected_fixed_points() {
        let f = test_boundary();
        let bp = BoundaryParams::default();
        let q = f.eval(CoverPoint::new(bp.x0, 0.0));
        assert!((q.x - bp.x0).abs() < 1e-15 && q.y == 0.0);
        let q = f.eval(CoverPoint::new(bp.p0, 0.0));
        assert!((q.x - bp.p0).abs() < 1e-15);
        let q = f.eval(CoverPoint::new(bp.x1, 1.0));
        assert!((q.x - bp.x1 - 1.0).abs() < 1e-14 && q.y == 1.0);
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            assert!(f.eval(CoverPoint::new(x, 0.0)).y.abs() < 1e-10);
            assert!((f.eval(CoverPoint::new(x, 1.0)).y - 1.0).abs() < 1e-10);
        }
        let det_pts = random_points(2000, 0.0, 1.0, 9);
        for &p in &det_pts {
            assert!((f.jacobian(p).det() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn boundary_circle_map_matches_oracle() {
        let bp = BoundaryParams::default();
        let f = test_boundary();
        let prof = CircleProfile::new(bp.amplitude, bp.x0, bp.p0).unwrap();
        let mut x = bp.p0 + 0.3;
        let mut p = CoverPoint::new(x, 0.0);
        for _ in 0..1000 {
            x = prof.circle_step(x);
            p = f.eval(p);
        }
        assert!((p.x - x).abs() < 1e-10);
        assert!(x > bp.p0 && x < bp.p0 + 0.3);
    }

    #[test]
    fn exterior_orbit_descends_monotonically() {
        let f = test_boundary();
        let mut p = CoverPoint::new(0.2, 2.0);
        for _ in 0..200 {
            let q = f.eval(p);
            assert!(q.y < p.y);
            assert!(q.y > 1.0);
            p = q;
        }
        assert!(p.y < 1.05);
    }

    #[test]
    fn boundary_rejects_overlap_and_budget() {
        let mut bp = BoundaryParams::default();
        bp.collar_outer = 0.6;
        assert!(boundary_morse_smale::<f64>(&bp).is_err());
        let mut bp = BoundaryParams::default();
        bp.c1_budget = Some(1e-5);
        assert!(boundary_morse_smale::<f64>(&bp).is_err());
    }

    #[test]
    fn bump_examples() {
        let prof = BumpProfile::new(AnnulusPoint::new(0.3, 0.5), 0.1, 0.02).unwrap();
        let up = bump_push(&prof, Direction::Up);
        let down = bump_push(&prof, Direction::Down);
        let far = CoverPoint::new(0.5, 0.5);
        assert_eq!(up.eval(far), far);
        assert_eq!(up.eval(CoverPoint::new(1.3, 0.5)), CoverPoint::new(1.3, 0.52));
        let mut total = 0.0;
        for i in 0..200 {
            for j in 0..200 {
                let p = CoverPoint::new(0.2 + 0.2 * i as f64 / 200.0, 0.4 + 0.2 * j as f64 / 200.0);
                let d = up.eval(p).y - p.y;
                assert!(d >= 0.0);
                total += d;
            }
        }
        assert!(total > 0.0);
        // a downward push of equal amplitude undoes the upward one up to the slope of the template
        let both = compose(&down, &up);
        for &p in &random_points(500, 0.3, 0.7, 2) {
            let q = both.eval(p);
            assert!((q.y - p.y).abs() < 2.0 * 0.02 * 0.02 / 0.1 * 2.2 && q.x == p.x);
        }
    }

    #[test]
    fn contraction_derivative_bounds() {
        for n in [2u32, 3, 8, 16, 64] {
            let h = vertical_contraction::<f64>(n).unwrap();
            let nf = n as f64;
            let mut sup0 = 0.0f64;
            let mut sup1 = 0.0f64;
            for i in 0..=20000 {
                let y = -nf - 1.0 + (2.0 * nf + 3.0) * i as f64 / 20000.0;
                let (q, j) = h.eval_jacobian(CoverPoint::new(0.0, y));
                assert!(j.d > 1.0 - 1.0 / nf && j.d < 1.0 + 1.0 / nf, "n={n} y={y} d={}", j.d);
                if (-1.0..=2.0).contains(&y) {
                    assert!(j.d < 1.0 - 0.5 / nf);
                }
                sup0 = sup0.max((q.y - y).abs());
                sup1 = sup1.max((j.d - 1.0).abs());
            }
            assert!(sup0 + sup1 <= 2.0 / nf, "n={n} c1={}", sup0 + sup1);
            let far = CoverPoint::new(0.3, 10.0 * nf);
            assert_eq!(h.eval(far), far);
            let edge = CoverPoint::new(0.3, nf + 1.0);
            assert_eq!(h.eval(edge), edge);
        }
        assert!(vertical_contraction::<f64>(1).is_err());
    }

    #[test]
    fn affine_horseshoe_geometry() {
        let hs = affine_horseshoe::<f64>(&AffineHorseshoeParams::default()).unwrap();
        let a = hs.eval(CoverPoint::new(0.2, 0.0));
        assert!((a.x - 0.1).abs() < 1e-15 && (a.y - 1.0 / 3.0).abs() < 1e-15);
        let b = hs.eval(CoverPoint::new(0.8, 1.0));
        assert!((b.x - 1.9).abs() < 1e-14 && (b.y - 2.0 / 3.0).abs() < 1e-15);
        let c = hs.eval(CoverPoint::new(1.2, 0.0));
        assert!((c.x - 1.1).abs() < 1e-14);
    }

    #[test]
    fn perturbation_is_sup_small() {
        let t = integrable_twist::<f64>();
        for kind in Perturbation::probe_family() {
            let g = sup_perturbation(&t, 0.01, kind);
            for &p in &random_points(200, 0.0, 1.0, 4) {
                let (a, b) = (t.eval(p), g.eval(p));
                assert!((a.x - b.x).hypot(a.y - b.y) <= 0.01 + 1e-12);
            }
        }
    }

    #[test]
    fn f32_instantiation() {
        let t = boundary_morse_smale::<f32>(&BoundaryParams::default()).unwrap();
        let q = t.eval(CoverPoint::new(0.25f32, 0.5));
        assert!((q.x - 0.75).abs() < 1e-5);
    }
}
