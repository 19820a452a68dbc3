//! Entropy brackets: derivative-growth upper bounds and separated-set estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{circle_dist, Band, CoverPoint};
use crate::error::{Error, Result};
use crate::grid::{GridSet, GridSummary};
use crate::linalg::JacobianChain;
use crate::maps::LiftedMap;
use crate::scalar::Scalar;

/// Steps between re-orthogonalizations of Jacobian products.
pub const RENORM_EVERY: usize = 32;

/// Box centres plus the distinct lattice corners of a grid set.
pub fn region_samples(region: &GridSet) -> Vec<(f64, f64)> {
    region.centers_and_corners(region.iter())
}

fn log_norm_growth<S: Scalar>(f: &LiftedMap<S>, p: CoverPoint<S>, n: usize, band: &Band<S>) -> Result<f64> {
    let mut chain = JacobianChain::new(RENORM_EVERY);
    let mut q = p;
    for step in 1..=n {
        let (q2, j) = f.eval_jacobian(q);
        if !band.contains(q2.y) || !q2.is_finite() {
            return Err(Error::OrbitEscape {
                step,
                y: q2.y.to_f64_lossy(),
                y_min: band.y_min.to_f64_lossy(),
                y_max: band.y_max.to_f64_lossy(),
            });
        }
        chain.push(j);
        q = q2;
    }
    Ok(chain.log_norm())
}

/// `(2/n) log max ||DF^n||_2` over box centres and corners of the region.
pub fn norm_growth_upper<S: Scalar>(f: &LiftedMap<S>, region: &GridSet, n: usize) -> Result<f64> {
    if n == 0 || region.is_empty() {
        return Err(Error::InvalidParams("norm growth needs n >= 1 and a nonempty region".into()));
    }
    let band: Band<S> = region.band().cast();
    let pts = region_samples(region);
    let logs: Vec<f64> = pts
        .par_iter()
        .map(|&(x, y)| log_norm_growth(f, CoverPoint::new(S::lit(x), S::lit(y)), n, &band))
        .collect::<Result<_>>()?;
    let m = logs.into_iter().fold(0.0f64, f64::max);
    Ok(2.0 * m / n as f64)
}

/// One row of the separated-set table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedRow {
    pub n: usize,
    pub eps: f64,
    pub count: usize,
    pub estimate: f64,
}

/// Non-certified `(n, eps)`-separated counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedTable {
    pub cloud_size: usize,
    pub rows: Vec<SeparatedRow>,
    pub certified: bool,
    pub note: String,
}

/// Cloud parameters for [`separated_set_estimate`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeparatedOptions {
    pub cloud: usize,
    pub seed: u64,
}

impl Default for SeparatedOptions {
    fn default() -> Self {
        Self { cloud: 4000, seed: 17 }
    }
}

/// Greedy maximal `(n, eps)`-separated subsets of a random cloud in the region.
///
/// A cloud point is used for length `n` only if its first `n - 1` iterates stay in the
/// region (mod 1). Distance is the max of circle distance and height difference.
pub fn separated_set_estimate<S: Scalar>(
    f: &LiftedMap<S>,
    region: &GridSet,
    n_list: &[usize],
    eps_list: &[f64],
    opts: &SeparatedOptions,
) -> Result<SeparatedTable> {
    let boxes = region.boxes();
    if boxes.is_empty() {
        return Err(Error::InvalidParams("empty region".into()));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let h = region.box_size();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cloud: Vec<(f64, f64)> = (0..opts.cloud)
        .map(|_| {
            let (i, j) = boxes[rng.gen_range(0..boxes.len())];
            let (x0, _, y0, _) = region.rect(i, j);
            (x0 + h * rng.gen::<f64>(), y0 + h * rng.gen::<f64>())
        })
        .collect();
    // orbit prefix staying in the region
    let orbits: Vec<Vec<(f64, f64)>> = cloud
        .par_iter()
        .map(|&(x, y)| {
            let mut o = Vec::with_capacity(n_max);
            let mut q = CoverPoint::new(S::lit(x), S::lit(y));
            for _ in 0..n_max {
                let (qx, qy) = (q.x.to_f64_lossy(), q.y.to_f64_lossy());
                if !region.locate(qx, qy).is_some_and(|(i, j)| region.contains(i, j)) {
                    break;
                }
                o.push((qx, qy));
                q = f.eval(q);
            }
            o
        })
        .collect();
    let mut rows = Vec::new();
    for &n in n_list {
        for &eps in eps_list {
            let alive: Vec<&Vec<(f64, f64)>> = orbits.iter().filter(|o| o.len() >= n.max(1)).collect();
            let mut chosen: Vec<&Vec<(f64, f64)>> = Vec::new();
            for o in alive {
                let separated = chosen.iter().all(|c| {
                    (0..n.max(1)).any(|k| {
                        let (a, b) = (o[k], c[k]);
                        circle_dist(a.0, b.0).max((a.1 - b.1).abs()) > eps
                    })
                });
                if separated {
                    chosen.push(o);
                }
            }
            let count = chosen.len();
            rows.push(SeparatedRow {
                n,
                eps,
                count,
                estimate: if count > 0 { (count as f64).ln() / n.max(1) as f64 } else { 0.0 },
            });
        }
    }
    Ok(SeparatedTable {
        cloud_size: opts.cloud,
        rows,
        certified: false,
        note: "empirical separated-set counts on a finite cloud; not a bound".to_string(),
    })
}

/// Lower and upper entropy bounds for one map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBracket {
    pub lower: f64,
    pub upper: f64,
    pub n_used: usize,
    pub region: GridSummary,
    pub certificate_ref: Option<String>,
    pub estimator_table: Option<SeparatedTable>,
}

/// Tolerance for the `lower <= upper` consistency check.
pub const BRACKET_TOL: f64 = 1e-9;

/// Combines a certificate lower bound (or 0) with the norm-growth upper bound.
pub fn bracket<S: Scalar>(
    f: &LiftedMap<S>,
    region: &GridSet,
    certificate_lower: Option<(f64, String)>,
    n: usize,
) -> Result<EntropyBracket> {
    let upper = norm_growth_upper(f, region, n)?;
    let (lower, certificate_ref) = match certificate_lower {
        Some((l, r)) => (l, Some(r)),
        None => (0.0, None),
    };
    if lower > upper + BRACKET_TOL {
        return Err(Error::Inconsistent { lower, upper });
    }
    Ok(EntropyBracket {
        lower,
        upper,
        n_used: n,
        region: region.summary(),
        certificate_ref,
        estimator_table: None,
    })
}

/// `(2/n) log((n + sqrt(n^2 + 4)) / 2)`, the bound for the integrable twist.
pub fn twist_bound(n: usize) -> f64 {
    let nf = n as f64;
    2.0 / nf * ((nf + (nf * nf + 4.0).sqrt()) / 2.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{affine_horseshoe, identity, integrable_twist, AffineHorseshoeParams};

    fn unit_band(depth: u8) -> GridSet {
        GridSet::horizontal_band(Band::new(-1.0, 2.0).unwrap(), depth, 0.0, 1.0).unwrap()
    }

    #[test]
    fn twist_matches_closed_form() {
        let r = unit_band(3);
        let t = integrable_twist::<f64>();
        let v = norm_growth_upper(&t, &r, 100).unwrap();
        assert!((v - twist_bound(100)).abs() < 1e-9);
        assert!((v - 0.0922).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        let mut n = 8;
        while n <= 1024 {
            let v = norm_growth_upper(&t, &r, n).unwrap();
            assert!(v < prev);
            prev = v;
            n *= 2;
        }
        assert!((prev - twist_bound(1024)).abs() < 1e-9);
    }

    #[test]
    fn identity_has_zero_bracket() {
        let b = bracket(&identity::<f64>(), &unit_band(3), None, 50).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn inconsistent_certificate_is_rejected() {
        let e = bracket(&identity::<f64>(), &unit_band(3), Some((0.5, "bogus".into())), 10);
        assert!(matches!(e, Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn power_scales_bound() {
        let t = integrable_twist::<f64>();
        let r = unit_band(3);
        let a = norm_growth_upper(&t, &r, 64).unwrap();
        let b = norm_growth_upper(&t.power(4), &r, 16).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn horseshoe_bracket() {
        let hs = affine_horseshoe::<f64>(&AffineHorseshoeParams::default()).unwrap();
        let r = unit_band(4);
        let b = bracket(&hs, &r, Some((2f64.ln(), "affine".into())), 1).unwrap();
        assert!((b.upper - 2.0 * 3f64.ln()).abs() < 1e-12);
        assert_eq!(b.lower, 2f64.ln());
    }

    #[test]
    fn identity_and_twist_estimates_vanish() {
        let r = unit_band(4);
        let opts = SeparatedOptions { cloud: 600, seed: 3 };
        let t = separated_set_estimate(&identity::<f64>(), &r, &[5, 20, 80], &[0.05], &opts).unwrap();
        assert!(!t.certified);
        assert!(t.rows.windows(2).all(|w| w[1].estimate < w[0].estimate));
        let t = separated_set_estimate(&integrable_twist::<f64>(), &r, &[5, 20, 80], &[0.05], &opts).unwrap();
        assert!(t.rows.windows(2).all(|w| w[1].estimate < w[0].estimate));
        assert!(t.rows.last().unwrap().estimate < 0.1);
    }

    #[test]
    fn separated_estimate_near_log2_on_two_symbol_model() {
        let f = affine_horseshoe::<f64>(&AffineHorseshoeParams::default()).unwrap();
        let r = GridSet::from_centers(Band::new(-1.0, 2.0).unwrap(), 6, |x, y| x > 0.2 && x < 0.8 && y > 0.0 && y < 1.0).unwrap();
        let t = separated_set_estimate(&f, &r, &[8, 10], &[0.05], &SeparatedOptions { cloud: 20000, seed: 5 }).unwrap();
        for row in &t.rows {
            assert!((row.estimate - 2f64.ln()).abs() < 0.2, "{row:?}");
        }
        assert!(!t.certified);
    }
}
