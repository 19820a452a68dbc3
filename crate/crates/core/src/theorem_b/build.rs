use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineParams;
use crate::attractor::{check_trap, Margin};
use crate::cover::{circle_dist, AnnulusPoint, Band, CoverPoint};
use crate::error::{Error, Result};
use crate::grid::GridSet;
use crate::horseshoe::{chain_reachable, ChainOptions};
use crate::maps::{
    boundary_morse_smale, bump_push, c1_distance, collar_perturbation, collar_samples, compose, compose_all,
    connector_c1_size, connector_shear, identity, strip_shear, vertical_contraction, BoundaryParams, BumpProfile, CircleProfile,
    ConnectorParams, Direction, LiftedMap, Strip,
};
use crate::rotation::orbit_rotation_number;
use crate::scalar::Scalar;

pub const F1_SHARE: f64 = 0.4;
pub const CONNECTOR_SHARE: f64 = 0.4;
pub const BUMP_SHARE: f64 = 0.2;

/// Probe amplitude for the linear C^1 calibration.
const PROBE: f64 = 1e-3;

/// How one stage spent its share of the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAudit {
    pub stage: String,
    pub amplitude: f64,
    pub allotted: f64,
    pub c1_size: f64,
    /// The amplitude hit a validity limit before the allotment.
    pub clamped: bool,
}

/// A stage map with its audit.
#[derive(Clone)]
pub struct Built<S: Scalar = f64> {
    pub map: LiftedMap<S>,
    pub audit: StageAudit,
}

/// Amplitude whose measured size fits `allotted`, starting from a linear calibration.
fn calibrate(allotted: f64, limit: f64, size: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64, bool)> {
    let unit = size(PROBE)? / PROBE;
    let mut amp = allotted / unit;
    let mut clamped = false;
    if amp > limit {
        amp = limit;
        clamped = true;
    }
    let mut s = size(amp)?;
    for _ in 0..8 {
        if s <= allotted || clamped {
            break;
        }
        amp *= 0.98 * allotted / s;
        s = size(amp)?;
    }
    Ok((amp, s, clamped))
}

fn boundary_params(p: &PipelineParams, amplitude: f64) -> BoundaryParams {
    BoundaryParams {
        x0: p.boundary.x0,
        p0: p.boundary.p0,
        x1: p.boundary.x1,
        p1: p.boundary.p1,
        amplitude,
        collar_inner: p.collar.0,
        collar_outer: p.collar.1,
        exterior_strength: p.exterior_strength,
        exterior_width: p.exterior_width,
        c1_budget: None,
    }
}

/// `f1`: boundary Morse-Smale dynamics on the two circles, conservative between them,
/// with the exterior of the band contracted.
pub fn build_f1<S: Scalar>(p: &PipelineParams) -> Result<Built<S>> {
    let pts = collar_samples::<S>(p.collar.1);
    let b = p.boundary;
    let size = |c: f64| -> Result<f64> {
        let l = S::lit;
        let q0 = collar_perturbation(S::zero(), CircleProfile::new(l(c), l(b.x0), l(b.p0))?, l(p.collar.0), l(p.collar.1))?;
        let q1 = collar_perturbation(S::one(), CircleProfile::new(l(c), l(b.x1), l(b.p1))?, l(p.collar.0), l(p.collar.1))?;
        Ok(c1_distance(&compose(&q1, &q0), &identity(), &pts))
    };
    let limit = 0.95 * 0.5 / CircleProfile::<f64>::SLOPE_FACTOR;
    let allotted = F1_SHARE * p.c1_budget;
    let (amp, s, clamped) = calibrate(allotted, limit, size)?;
    let map = boundary_morse_smale(&boundary_params(p, amp))?;
    Ok(Built {
        map,
        audit: StageAudit {
            stage: "f1".into(),
            amplitude: amp,
            allotted,
            c1_size: s,
            clamped,
        },
    })
}

fn connector_params(p: &PipelineParams, amplitude: f64) -> ConnectorParams {
    let (r1, r2) = p.strip_bounds;
    ConnectorParams {
        strips: vec![Strip {
            lo: r1,
            hi: r2,
            edge: p.strip_edge,
            amplitude,
            phase: 0.0,
        }],
        range: (r1 - 1e-9, r2 + 1e-9),
        c1_budget: None,
    }
}

/// `f2 = c o f1` with `c` an area-preserving shear supported in the strip `(r1, r2)`.
pub fn build_f2<S: Scalar>(f1: &LiftedMap<S>, p: &PipelineParams) -> Result<Built<S>> {
    let size = |a: f64| -> Result<f64> {
        let cp = connector_params(p, a);
        let c = connector_shear::<S>(&cp)?;
        Ok(connector_c1_size(&c, &cp))
    };
    let limit = 0.95 * std::f64::consts::PI * p.strip_edge;
    let allotted = CONNECTOR_SHARE * p.c1_budget;
    let (amp, s, clamped) = calibrate(allotted, limit, size)?;
    let c = connector_shear::<S>(&connector_params(p, amp))?;
    Ok(Built {
        map: compose(&c, f1).with_label("f2").with_params(f1.params().clone()).with_param("connector_amplitude", amp),
        audit: StageAudit {
            stage: "connector".into(),
            amplitude: amp,
            allotted,
            c1_size: s,
            clamped,
        },
    })
}

/// Bump sites: midway from the repeller to the saddle-node on each circle.
fn bump_sites(p: &PipelineParams) -> (AnnulusPoint<f64>, AnnulusPoint<f64>) {
    let mid = |x: f64, q: f64| {
        let d = (q - x).rem_euclid(1.0);
        x + d / 2.0
    };
    let b = p.boundary;
    (AnnulusPoint::new(mid(b.x0, b.p0), 0.0), AnnulusPoint::new(mid(b.x1, b.p1), 1.0))
}

fn bump_samples<S: Scalar>(center: AnnulusPoint<f64>, r: f64) -> Vec<CoverPoint<S>> {
    let mut pts = Vec::new();
    for i in 0..=48 {
        for j in 0..=48 {
            let x = center.x - r + 2.0 * r * i as f64 / 48.0;
            let y = center.y - r + 2.0 * r * j as f64 / 48.0;
            pts.push(CoverPoint::new(S::lit(x), S::lit(y)));
        }
    }
    pts
}

fn bumps<S: Scalar>(p: &PipelineParams, amp: f64) -> Result<(LiftedMap<S>, LiftedMap<S>)> {
    let (z0, z1) = bump_sites(p);
    let r = S::lit(p.bump_radius);
    let b0 = bump_push(&BumpProfile::new(z0.cast(), r, S::lit(amp))?, Direction::Up);
    let b1 = bump_push(&BumpProfile::new(z1.cast(), r, S::lit(amp))?, Direction::Down);
    Ok((b0, b1))
}

/// `f = b1 o b0 o f2`: bumps push the wandering arcs of the boundary circles into the band.
pub fn build_final<S: Scalar>(f2: &LiftedMap<S>, p: &PipelineParams) -> Result<Built<S>> {
    let (z0, _) = bump_sites(p);
    let pts = bump_samples::<S>(z0, p.bump_radius);
    let size = |a: f64| -> Result<f64> {
        let (b0, _) = bumps::<S>(p, a)?;
        Ok(c1_distance(&b0, &identity(), &pts))
    };
    let allotted = BUMP_SHARE * p.c1_budget;
    // the push must stay inside the ball
    let (amp, s, clamped) = calibrate(allotted, 0.5 * p.bump_radius, size)?;
    let (b0, b1) = bumps::<S>(p, amp)?;
    let map = compose_all(&[b1, b0, f2.clone()])
        .expect("non-empty")
        .with_label("f")
        .with_params(f2.params().clone())
        .with_param("bump_amplitude", amp);
    Ok(Built {
        map,
        audit: StageAudit {
            stage: "bumps".into(),
            amplitude: amp,
            allotted,
            c1_size: s,
            clamped,
        },
    })
}

/// The dissipative variant's own shear composed with `f1`.
///
/// Its plateau covers the whole band, so on `[0, 1]` it is a standard-map kick.
pub fn build_dissipative_connector<S: Scalar>(f1: &LiftedMap<S>, p: &PipelineParams) -> Result<LiftedMap<S>> {
    let d = &p.dissipative;
    let c = strip_shear::<S>(&[Strip {
        lo: d.strip.0,
        hi: d.strip.1,
        edge: d.edge,
        amplitude: d.amplitude,
        phase: 0.0,
    }])?;
    Ok(compose(&c, f1).with_label("f2d").with_params(f1.params().clone()).with_param("kick_amplitude", d.amplitude))
}

/// `g_n = h_n o f2`.
pub fn build_dissipative<S: Scalar>(f2: &LiftedMap<S>, n: u32) -> Result<LiftedMap<S>> {
    let h = vertical_contraction::<S>(n)?;
    Ok(compose(&h, f2).with_label(format!("g{n}")).with_params(f2.params().clone()).with_param("n", n as f64))
}

fn lattice<S: Scalar>(nx: usize, ny: usize, y0: f64, y1: f64) -> Vec<CoverPoint<S>> {
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) / nx as f64;
            let y = y0 + (y1 - y0) * (j as f64 + 0.5) / ny as f64;
            v.push(CoverPoint::new(S::lit(x), S::lit(y)));
        }
    }
    v
}

fn max_det_defect<S: Scalar>(f: &LiftedMap<S>, pts: &[CoverPoint<S>]) -> f64 {
    let h = S::lit(1e-6).max(crate::maps::fd_step::<S>());
    pts.par_iter()
        .map(|&q| (f.fd_jacobian(q, h).det().to_f64_lossy() - 1.0).abs())
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Check {
    /// Largest height change of points on the two boundary circles.
    pub circle_invariance: f64,
    pub upper_fixed_rotation: f64,
    pub det_defect: f64,
    pub trap: bool,
}

impl F1Check {
    pub fn ok(&self) -> bool {
        self.circle_invariance < 1e-10 && (self.upper_fixed_rotation - 1.0).abs() < 1e-9 && self.det_defect < 1e-8 && self.trap
    }
}

pub fn verify_f1<S: Scalar>(f1: &LiftedMap<S>, p: &PipelineParams) -> Result<F1Check> {
    let mut inv = 0.0f64;
    for k in 0..1000 {
        for h in [0.0, 1.0] {
            let q = f1.eval(CoverPoint::new(S::lit(k as f64 / 1000.0), S::lit(h)));
            inv = inv.max((q.y.to_f64_lossy() - h).abs());
        }
    }
    let band: Band<S> = p.band()?.cast();
    let rot = orbit_rotation_number(f1, AnnulusPoint::new(S::lit(p.boundary.x1), S::one()), 1000, &band)?;
    Ok(F1Check {
        circle_invariance: inv,
        upper_fixed_rotation: rot.to_f64_lossy(),
        det_defect: max_det_defect(f1, &lattice(64, 64, 0.0, 1.0)),
        trap: check_trap(f1, &p.trap_region()?, Margin::default()),
    })
}

/// Forward transport of a seed arc near a boundary saddle-node towards the opposite circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProbe {
    pub from: String,
    pub steps: usize,
    /// Farthest normalized progress towards the other circle, in `[0, 1]`.
    pub progress: f64,
    pub reached: bool,
}

fn transport<S: Scalar>(f: &LiftedMap<S>, x: f64, up: bool, steps: usize) -> TransportProbe {
    let seeds: Vec<f64> = (1..=64).map(|k| 0.02 * k as f64 / 64.0).collect();
    let progress = seeds
        .par_iter()
        .map(|&d| {
            let y = if up { d } else { 1.0 - d };
            let mut q = CoverPoint::new(S::lit(x), S::lit(y));
            let mut best = 0.0f64;
            for _ in 0..steps {
                q = f.eval(q);
                let y = q.y.to_f64_lossy();
                let prog = if up { y } else { 1.0 - y };
                best = best.max(prog);
                if !y.is_finite() || best > 0.98 {
                    break;
                }
            }
            best.clamp(0.0, 1.0)
        })
        .reduce(|| 0.0, f64::max);
    TransportProbe {
        from: if up { "p0".into() } else { "p1".into() },
        steps,
        progress,
        reached: progress > 0.98,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2Check {
    /// Points outside the strip where `f2` and `f1` differ.
    pub outside_strip_mismatches: usize,
    pub det_defect: f64,
    /// Chain from the lower to the upper circle with jumps in the open band.
    pub instability_chain: bool,
    /// Informational: orbit transport between the boundary saddle-nodes.
    pub transport: Vec<TransportProbe>,
}

impl F2Check {
    pub fn ok(&self) -> bool {
        self.outside_strip_mismatches == 0 && self.det_defect < 1e-8 && self.instability_chain
    }
}

pub fn verify_f2<S: Scalar>(f2: &LiftedMap<S>, f1: &LiftedMap<S>, p: &PipelineParams) -> Result<F2Check> {
    let (r1, r2) = p.strip_bounds;
    let mut mismatches = 0;
    for q in lattice::<S>(64, 64, 0.0, 1.0) {
        let a = f1.eval(q);
        if a.y.to_f64_lossy() > r1 && a.y.to_f64_lossy() < r2 {
            continue;
        }
        if f2.eval(q) != a {
            mismatches += 1;
        }
    }
    let k = GridSet::horizontal_band(p.band()?, p.chain_depth, 0.0, 1.0)?;
    let opts = ChainOptions {
        horizon: 0,
        ..ChainOptions::default()
    };
    let h = k.box_size();
    let chain = chain_reachable(
        f2,
        AnnulusPoint::new(0.25, h / 2.0),
        AnnulusPoint::new(0.75, 1.0 - h / 2.0),
        &k,
        1.5 * k.box_diagonal(),
        &opts,
    )?;
    Ok(F2Check {
        outside_strip_mismatches: mismatches,
        det_defect: max_det_defect(f2, &lattice(64, 64, 0.0, 1.0)),
        instability_chain: chain,
        transport: vec![
            transport(f2, p.boundary.p0, true, 2000),
            transport(f2, p.boundary.p1, false, 2000),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalCheck {
    /// Points outside the bump balls where `f` and `f2` differ.
    pub outside_bump_mismatches: usize,
    pub wandering_horizon: usize,
    /// Half-height of the neighbourhood of the arcs used by the return test.
    pub wandering_thickness: f64,
    /// Iterates of the wandering arcs that returned to their own cover within the horizon.
    pub wandering_returns: usize,
    /// Lowest height reached by backward orbits of the line below the lower circle.
    pub backward_escape_height: f64,
    pub trap: bool,
}

impl FinalCheck {
    pub fn ok(&self) -> bool {
        self.outside_bump_mismatches == 0 && self.wandering_returns == 0 && self.backward_escape_height < -2.0 && self.trap
    }
}

pub fn verify_final<S: Scalar>(f: &LiftedMap<S>, f2: &LiftedMap<S>, p: &PipelineParams) -> Result<FinalCheck> {
    let (z0, z1) = bump_sites(p);
    let r = p.bump_radius;
    let in_ball = |q: CoverPoint<f64>, z: AnnulusPoint<f64>| circle_dist(q.x, z.x).hypot(q.y - z.y) < r;
    let mut mismatches = 0;
    for q in lattice::<S>(64, 80, -0.2, 1.2) {
        let a = f2.eval(q);
        let af = a.cast::<f64>();
        if in_ball(af, z0) || in_ball(af, z1) {
            continue;
        }
        if f.eval(q) != a {
            mismatches += 1;
        }
    }
    // wandering arcs: the part of each circle inside half the bump radius, thickened by
    // half the smallest push they receive
    let amp = f.params().get("bump_amplitude").copied().unwrap_or(0.0);
    let push = amp * crate::profile::bump_template(0.25);
    let cover_h = (0.5 * push).min(1.0 / (1u64 << p.depth) as f64);
    let arcs: Vec<(f64, f64, f64)> = (0..64)
        .flat_map(|k| {
            let t = -0.5 + k as f64 / 63.0;
            [(z0.x + t * r, z0.y, z0.x), (z1.x + t * r, z1.y, z1.x)]
        })
        .collect();
    let returns: usize = arcs
        .par_iter()
        .map(|&(x, y, zx)| {
            let mut q = CoverPoint::new(S::lit(x), S::lit(y));
            let mut hits = 0;
            for _ in 0..p.n_check {
                q = f.eval(q);
                let (qx, qy) = (q.x.to_f64_lossy(), q.y.to_f64_lossy());
                if circle_dist(qx, zx) <= 0.5 * r && (qy - y).abs() <= cover_h {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let tol = S::lit(1e-13);
    let escape = (0..32)
        .into_par_iter()
        .map(|k| {
            let mut q = CoverPoint::new(S::lit(k as f64 / 32.0), S::lit(-0.1));
            let mut low = -0.1f64;
            for _ in 0..1000 {
                match f.inverse(q, tol) {
                    Ok(prev) => q = prev,
                    Err(_) => break,
                }
                low = low.min(q.y.to_f64_lossy());
                if low < p.band.0 + 0.5 {
                    break;
                }
            }
            low
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(FinalCheck {
        outside_bump_mismatches: mismatches,
        wandering_horizon: p.n_check,
        wandering_thickness: cover_h,
        wandering_returns: returns,
        backward_escape_height: escape,
        trap: check_trap(f, &p.trap_region()?, Margin::default()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeCheck {
    pub n: u32,
    pub max_det: f64,
    pub det_bound: f64,
    pub min_twist: f64,
    pub trap: bool,
}

impl DissipativeCheck {
    pub fn ok(&self) -> bool {
        self.max_det < self.det_bound && self.min_twist > 0.0 && self.trap
    }
}

/// Determinant and twist probes on `S^1 x [-1, 2]`, plus the trap of that band.
pub fn verify_dissipative<S: Scalar>(g: &LiftedMap<S>, n: u32, p: &PipelineParams) -> Result<DissipativeCheck> {
    if n < 2 {
        return Err(Error::InvalidParams("n >= 2".into()));
    }
    let pts = lattice::<S>(64, 192, -1.0, 2.0);
    let (max_det, min_twist) = pts
        .par_iter()
        .map(|&q| {
            let j = g.jacobian(q);
            (j.det().to_f64_lossy(), j.b.to_f64_lossy())
        })
        .reduce(|| (f64::NEG_INFINITY, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)));
    let a = GridSet::horizontal_band(p.band()?, p.base_depth.max(5), -1.0, 2.0)?;
    Ok(DissipativeCheck {
        n,
        max_det,
        det_bound: 1.0 - 1.0 / (2.0 * n as f64),
        min_twist,
        trap: check_trap(g, &a, Margin::default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> PipelineParams {
        PipelineParams {
            n_check: 500,
            chain_depth: 5,
            ..PipelineParams::default()
        }
    }

    #[test]
    fn f1_stage_checks() {
        let p = fast();
        let f1 = build_f1::<f64>(&p).unwrap();
        let c = verify_f1(&f1.map, &p).unwrap();
        assert!(c.ok(), "{c:?}");
        assert!(f1.audit.c1_size <= f1.audit.allotted * (1.0 + 1e-9));
        assert!(!f1.audit.clamped);
    }

    #[test]
    fn f1_lower_fixed_point_has_rotation_zero() {
        let p = fast();
        let f1 = build_f1::<f64>(&p).unwrap().map;
        let band = p.band().unwrap();
        let r = orbit_rotation_number(&f1, AnnulusPoint::new(p.boundary.x0, 0.0), 1000, &band).unwrap();
        assert!(r.abs() < 1e-9, "{r}");
    }

    #[test]
    fn f2_agrees_with_f1_off_strip() {
        let p = fast();
        let f1 = build_f1::<f64>(&p).unwrap();
        let f2 = build_f2(&f1.map, &p).unwrap();
        let c = verify_f2(&f2.map, &f1.map, &p).unwrap();
        assert_eq!(c.outside_strip_mismatches, 0);
        assert!(c.det_defect < 1e-8);
        assert!(c.instability_chain);
        assert!(f2.audit.c1_size <= f2.audit.allotted * (1.0 + 1e-9));
    }

    #[test]
    fn final_stage_checks() {
        let p = fast();
        let f1 = build_f1::<f64>(&p).unwrap();
        let f2 = build_f2(&f1.map, &p).unwrap();
        let f = build_final(&f2.map, &p).unwrap();
        let c = verify_final(&f.map, &f2.map, &p).unwrap();
        assert!(c.ok(), "{c:?}");
        let total: f64 = [&f1.audit, &f2.audit, &f.audit].iter().map(|a| a.allotted).sum();
        assert!((total - p.c1_budget).abs() < 1e-12);
    }

    #[test]
    fn dissipative_det_and_twist() {
        let p = fast();
        let f1 = build_f1::<f64>(&p).unwrap();
        let f2 = build_dissipative_connector(&f1.map, &p).unwrap();
        let g = build_dissipative(&f2, 16).unwrap();
        let c = verify_dissipative(&g, 16, &p).unwrap();
        assert!(c.ok(), "{c:?}");
        assert!((c.det_bound - 0.96875).abs() < 1e-15);
        assert!(verify_dissipative(&g, 1, &p).is_err());
    }

    #[test]
    fn huge_budget_clamps() {
        let p = PipelineParams {
            c1_budget: 50.0,
            ..fast()
        };
        let f1 = build_f1::<f64>(&p).unwrap();
        let f2 = build_f2(&f1.map, &p).unwrap();
        assert!(f1.audit.clamped && f2.audit.clamped);
    }

    #[test]
    fn f32_build_matches_f64() {
        let p = fast();
        let a = build_f1::<f64>(&p).unwrap().map;
        let b = build_f1::<f32>(&p).unwrap().map;
        let q = a.eval(CoverPoint::new(0.3, 0.4));
        let r = b.eval(CoverPoint::new(0.3f32, 0.4));
        assert!((q.x - r.x as f64).abs() < 1e-5 && (q.y - r.y as f64).abs() < 1e-5);
    }
}
