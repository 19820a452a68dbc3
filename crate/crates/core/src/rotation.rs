//! Rotation numbers, finite-time rotation intervals and periodic-orbit search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{project, AnnulusPoint, Band, CoverPoint};
use crate::error::{Error, Result};
use crate::grid::GridSet;
use crate::maps::{fd_step, LiftedMap};
use crate::scalar::Scalar;

/// Estimator caveat attached to every interval report.
pub const ESTIMATOR_CAVEAT: &str =
    "finite-time Birkhoff averages along single orbits; limits along varying base points are not sampled";

fn escape<S: Scalar>(step: usize, y: S, band: &Band<S>) -> Error {
    Error::OrbitEscape {
        step,
        y: y.to_f64_lossy(),
        y_min: band.y_min.to_f64_lossy(),
        y_max: band.y_max.to_f64_lossy(),
    }
}

/// `(pi_1(F^n(p~)) - pi_1(p~)) / n` for the lift of `p` in `[0, 1)`.
pub fn orbit_rotation_number<S: Scalar>(f: &LiftedMap<S>, p: AnnulusPoint<S>, n: usize, band: &Band<S>) -> Result<S> {
    if n == 0 {
        return Err(Error::InvalidParams("orbit length must be >= 1".into()));
    }
    let start = p.lift();
    let mut q = start;
    for step in 1..=n {
        q = f.eval(q);
        if !band.contains(q.y) || !q.is_finite() {
            return Err(escape(step, q.y, band));
        }
    }
    Ok((q.x - start.x) / S::lit(n as f64))
}

/// Rotation averages at lengths `n` and `2n` along one orbit.
fn two_scale_rotation<S: Scalar>(f: &LiftedMap<S>, p: CoverPoint<S>, n: usize, band: &Band<S>) -> Result<(f64, f64)> {
    let mut q = p;
    let mut at_n = S::zero();
    for step in 1..=2 * n {
        q = f.eval(q);
        if !band.contains(q.y) || !q.is_finite() {
            return Err(escape(step, q.y, band));
        }
        if step == n {
            at_n = q.x;
        }
    }
    let nf = n as f64;
    Ok((
        (at_n - p.x).to_f64_lossy() / nf,
        (q.x - p.x).to_f64_lossy() / (2.0 * nf),
    ))
}

/// Sampling controls for [`rotation_interval`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RotationOptions {
    pub seed: u64,
    /// Hausdorff gap between the `n` and `2n` intervals below which the estimate counts as stabilized.
    pub stabilization_tol: f64,
    /// Also start orbits at the corners of the sampled boxes.
    #[serde(default)]
    pub corners: bool,
}

impl Default for RotationOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            stabilization_tol: 1e-2,
            corners: false,
        }
    }
}

/// Finite-time rotation interval of an invariant set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationInterval {
    pub rho_min: f64,
    pub rho_max: f64,
    pub orbit_length: usize,
    pub sample_count: usize,
    pub stabilized: bool,
    pub stabilization_gap: f64,
    /// Interval at half the orbit length.
    pub half_length_interval: (f64, f64),
    pub caveat: String,
}

impl RotationInterval {
    pub fn contains_interval(&self, lo: f64, hi: f64) -> bool {
        self.rho_min <= lo && self.rho_max >= hi
    }

    pub fn length(&self) -> f64 {
        self.rho_max - self.rho_min
    }
}

/// Box centres of `k` in a deterministic shuffled order, truncated to `samples`.
pub fn sample_centers(k: &GridSet, samples: usize, seed: u64) -> Vec<(f64, f64)> {
    sample_boxes(k, samples, seed).into_iter().map(|(i, j)| k.center(i, j)).collect()
}

fn sample_boxes(k: &GridSet, samples: usize, seed: u64) -> Vec<(u32, u32)> {
    let mut boxes = k.boxes();
    if samples < boxes.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        boxes.shuffle(&mut rng);
        boxes.truncate(samples);
        boxes.sort_unstable_by_key(|&(i, j)| (j, i));
    }
    boxes
}

/// Extremes of rotation averages over `samples` box centres of `k`, at lengths `n` and `2n`.
/// With `corners` set the corners of the sampled boxes are added.
pub fn rotation_interval<S: Scalar>(
    f: &LiftedMap<S>,
    k: &GridSet,
    n_orbit: usize,
    samples: usize,
    opts: &RotationOptions,
) -> Result<RotationInterval> {
    if k.is_empty() || n_orbit == 0 || samples == 0 {
        return Err(Error::InvalidParams("rotation interval needs a nonempty set, n >= 1 and samples >= 1".into()));
    }
    let band: Band<S> = k.band().cast();
    let seeds = if opts.corners {
        k.centers_and_corners(sample_boxes(k, samples, opts.seed))
    } else {
        sample_centers(k, samples, opts.seed)
    };
    let rhos: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&(x, y)| two_scale_rotation(f, CoverPoint::new(S::lit(x), S::lit(y)), n_orbit, &band))
        .collect::<Result<_>>()?;
    let fold = |sel: fn(&(f64, f64)) -> f64| {
        rhos.iter()
            .map(sel)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r), b.max(r)))
    };
    let (lo1, hi1) = fold(|r| r.0);
    let (lo2, hi2) = fold(|r| r.1);
    let gap = (lo1 - lo2).abs().max((hi1 - hi2).abs());
    Ok(RotationInterval {
        rho_min: lo2,
        rho_max: hi2,
        orbit_length: 2 * n_orbit,
        sample_count: seeds.len(),
        stabilized: gap < opts.stabilization_tol,
        stabilization_gap: gap,
        half_length_interval: (lo1, hi1),
        caveat: ESTIMATOR_CAVEAT.to_string(),
    })
}

/// Linear type of a periodic orbit from the multipliers of `DF^q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Saddle,
    Sink,
    Source,
    Elliptic,
    Degenerate,
}

/// A periodic point realizing the rotation number `p/q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PeriodicOrbitWitness<S: Scalar = f64> {
    pub point: AnnulusPoint<S>,
    pub period: usize,
    pub shift: i64,
    pub residual: f64,
    pub stability: Stability,
    pub multipliers: Option<(f64, f64)>,
}

/// Linear type of a fixed point of `g` at `z`, with multipliers when real.
pub fn classify<S: Scalar>(g: &LiftedMap<S>, z: CoverPoint<S>) -> (Stability, Option<(f64, f64)>) {
    let j = g.jacobian(z).cast::<f64>();
    let tol = 1e-7;
    match j.real_eigenvalues() {
        Some((a, b)) => {
            let (a, b) = (a.abs(), b.abs());
            let st = if a < 1.0 - tol && b > 1.0 + tol {
                Stability::Saddle
            } else if b < 1.0 - tol {
                Stability::Sink
            } else if a > 1.0 + tol {
                Stability::Source
            } else {
                Stability::Degenerate
            };
            (st, Some((a, b)))
        }
        None => {
            let m = j.det().abs().sqrt();
            let st = if m < 1.0 - tol {
                Stability::Sink
            } else if m > 1.0 + tol {
                Stability::Source
            } else {
                Stability::Elliptic
            };
            (st, None)
        }
    }
}

fn residual<S: Scalar>(fq: &LiftedMap<S>, z: CoverPoint<S>, shift: S) -> (S, S) {
    let w = fq.eval(z);
    (w.x - z.x - shift, w.y - z.y)
}

/// Levenberg-Marquardt root search for `F^q(z) - z - (p, 0) = 0` from each seed.
///
/// Returns the first witness whose residual is below `tol`.
pub fn find_periodic<S: Scalar>(
    f: &LiftedMap<S>,
    p: i64,
    q: usize,
    seeds: &[AnnulusPoint<S>],
    tol: f64,
) -> Option<PeriodicOrbitWitness<S>> {
    if q == 0 {
        return None;
    }
    let fq = f.power(q);
    let shift = S::lit(p as f64);
    let h = fd_step::<S>();
    for seed in seeds {
        let mut z = seed.lift();
        let mut lambda = 1e-3f64;
        let (mut rx, mut ry) = residual(&fq, z, shift);
        let mut norm = rx.hypot(ry).to_f64_lossy();
        if !norm.is_finite() {
            continue;
        }
        for _ in 0..200 {
            if norm < tol * 1e-3 {
                break;
            }
            let j = fq.fd_jacobian(z, h).cast::<f64>();
            // G = F^q - id - shift, so DG = J - I
            let (a, b, c, d) = (j.a - 1.0, j.b, j.c, j.d - 1.0);
            let (gx, gy) = (rx.to_f64_lossy(), ry.to_f64_lossy());
            let mut improved = false;
            for _ in 0..30 {
                // (DG^T DG + lambda I) dz = -DG^T g
                let m11 = a * a + c * c + lambda;
                let m12 = a * b + c * d;
                let m22 = b * b + d * d + lambda;
                let r1 = -(a * gx + c * gy);
                let r2 = -(b * gx + d * gy);
                let det = m11 * m22 - m12 * m12;
                if det == 0.0 || !det.is_finite() {
                    lambda *= 10.0;
                    continue;
                }
                let dx = (r1 * m22 - r2 * m12) / det;
                let dy = (m11 * r2 - m12 * r1) / det;
                let cand = CoverPoint::new(z.x + S::lit(dx), z.y + S::lit(dy));
                let (cx, cy) = residual(&fq, cand, shift);
                let cn = cx.hypot(cy).to_f64_lossy();
                if cn.is_finite() && cn < norm {
                    z = cand;
                    (rx, ry) = (cx, cy);
                    norm = cn;
                    lambda = (lambda * 0.3).max(1e-15);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        if norm < tol {
            let (stability, multipliers) = classify(&fq, z);
            return Some(PeriodicOrbitWitness {
                point: project(z),
                period: q,
                shift: p,
                residual: norm,
                stability,
                multipliers,
            });
        }
    }
    None
}

/// Seeds on a regular `nx x ny` lattice of `S^1 x [y0, y1]`.
pub fn lattice_seeds<S: Scalar>(nx: usize, ny: usize, y0: f64, y1: f64) -> Vec<AnnulusPoint<S>> {
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) / nx as f64;
            let y = if ny == 1 { (y0 + y1) / 2.0 } else { y0 + (y1 - y0) * j as f64 / (ny - 1) as f64 };
            out.push(AnnulusPoint::new(S::lit(x), S::lit(y)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{identity, integrable_twist};
    use proptest::prelude::*;

    fn band() -> Band<f64> {
        Band::new(-3.0, 4.0).unwrap()
    }

    #[test]
    fn twist_rotation_examples() {
        let t = integrable_twist::<f64>();
        let r = orbit_rotation_number(&t, AnnulusPoint::new(0.3, 0.5), 200, &band()).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let r = orbit_rotation_number(&t, AnnulusPoint::new(0.3, -1.0), 100, &band()).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn escape_is_signalled() {
        let up = LiftedMap::from_fn("up", |p: CoverPoint<f64>| CoverPoint::new(p.x, p.y + 1.0));
        let e = orbit_rotation_number(&up, AnnulusPoint::new(0.0, 0.0), 10, &Band::new(-1.0, 2.5).unwrap());
        assert!(matches!(e, Err(Error::OrbitEscape { step: 3, .. })));
    }

    #[test]
    fn twist_interval_on_unit_band() {
        let k = GridSet::horizontal_band(Band::new(-1.0, 2.0).unwrap(), 5, 0.0, 1.0).unwrap();
        let ri = rotation_interval(&integrable_twist::<f64>(), &k, 500, 400, &RotationOptions::default()).unwrap();
        let h = k.box_size();
        assert!((ri.rho_min - 0.0).abs() <= h && (ri.rho_max - 1.0).abs() <= h, "{ri:?}");
        assert!(ri.stabilized);
        let ri = rotation_interval(&identity::<f64>(), &k, 50, 100, &RotationOptions::default()).unwrap();
        assert_eq!((ri.rho_min, ri.rho_max), (0.0, 0.0));
    }

    #[test]
    fn deck_shifted_lift_adds_one() {
        let t = integrable_twist::<f64>();
        let t1 = t.deck_shifted(1);
        for y in [-0.7, 0.0, 0.3, 0.9] {
            let p = AnnulusPoint::new(0.42, y);
            let a = orbit_rotation_number(&t, p, 300, &band()).unwrap();
            let b = orbit_rotation_number(&t1, p, 300, &band()).unwrap();
            assert!((b - a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn twist_periodic_witnesses() {
        let t = integrable_twist::<f64>();
        let seeds = lattice_seeds(4, 5, 0.1, 0.9);
        let w = find_periodic(&t, 1, 2, &seeds, 1e-10).unwrap();
        assert!((w.point.y - 0.5).abs() < 1e-10 && w.residual < 1e-10);
        let w = find_periodic(&t, 1, 3, &seeds, 1e-10).unwrap();
        assert!((w.point.y - 1.0 / 3.0).abs() < 1e-10);
        assert_eq!(w.stability, Stability::Degenerate);
    }

    proptest! {
        #[test]
        fn rotation_is_deck_conjugation_invariant(x in 0f64..1.0, y in -1f64..1.0, k in -5i64..5) {
            let t = integrable_twist::<f64>();
            let shifted = LiftedMap::from_fn("conj", move |p: CoverPoint<f64>| {
                let q = t.eval(CoverPoint::new(p.x - k as f64, p.y));
                CoverPoint::new(q.x + k as f64, q.y)
            });
            let a = orbit_rotation_number(&integrable_twist(), AnnulusPoint::new(x, y), 64, &band()).unwrap();
            let b = orbit_rotation_number(&shifted, AnnulusPoint::new(x, y), 64, &band()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn interval_monotone_under_inclusion(y0 in 0f64..0.4, y1 in 0.6f64..1.0) {
            let b = Band::new(-1.0, 2.0).unwrap();
            let big = GridSet::horizontal_band(b, 4, 0.0, 1.0).unwrap();
            let small = GridSet::horizontal_band(b, 4, y0, y1).unwrap();
            let t = integrable_twist::<f64>();
            let opts = RotationOptions::default();
            let n = big.len();
            let rb = rotation_interval(&t, &big, 40, n, &opts).unwrap();
            let rs = rotation_interval(&t, &small, 40, n, &opts).unwrap();
            prop_assert!(rb.rho_min <= rs.rho_min && rs.rho_max <= rb.rho_max);
        }
    }

    #[test]
    fn corners_reach_aligned_band_edges() {
        let k = GridSet::horizontal_band(Band::new(-0.5, 1.5).unwrap(), 4, 0.0, 1.0).unwrap();
        let opts = RotationOptions {
            corners: true,
            ..RotationOptions::default()
        };
        let r = rotation_interval(&integrable_twist::<f64>(), &k, 1000, 10_000, &opts).unwrap();
        assert!(r.rho_min.abs() < 1e-12 && (r.rho_max - 1.0).abs() < 1e-12, "{r:?}");
    }
}
