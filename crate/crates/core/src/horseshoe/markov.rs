use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rectangle::AdaptedRectangle;
use super::{adapted_rectangle, JoiningContinuum};
use crate::attractor::{box_image, check_trap, Margin};
use crate::cover::CoverPoint;
use crate::error::{Error, Result};
use crate::maps::{sup_perturbation, LiftedMap, Perturbation};
use crate::scalar::Scalar;

/// Certificate of a rotational horseshoe for `F^n0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeCertificate {
    pub n0: usize,
    pub j: i64,
    pub m: usize,
    pub displacements: Vec<i64>,
    pub kappa: f64,
    pub entropy_lower: f64,
    /// Lifted `[x0, x1, y0, y1]` of the rectangle.
    pub rectangle_bounds: [f64; 4],
    pub depth: u8,
    /// Largest enclosure dilation used.
    pub margin: f64,
    /// Gap between the left wall's image and the rectangle, and between the right wall's image
    /// and the `j`-translate.
    pub clearance: (f64, f64),
}

/// Abscissa hull of the lifted enclosure of `F(wall)`.
fn wall_image_hull<S: Scalar>(
    f: &LiftedMap<S>,
    r: &AdaptedRectangle,
    right: bool,
    margin: Margin,
) -> Result<(f64, f64, f64)> {
    let wall = if right { &r.right_wall } else { &r.left_wall };
    let band = wall.band();
    let (mut lo, mut hi, mut mmax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (i, j, k) in r.lifted_wall(right) {
        let (xl, xh, yl, yh, m) = box_image(f, wall, i, j, margin);
        if !(yl - m > band.y_min && yh + m < band.y_max) || !xl.is_finite() || !xh.is_finite() {
            return Err(Error::ImageLeftBand { i, j, lo: yl - m, hi: yh + m });
        }
        lo = lo.min(xl - m + k as f64);
        hi = hi.max(xh + m + k as f64);
        mmax = mmax.max(m);
    }
    Ok((lo, hi, mmax))
}

/// Markov crossing check for `F^n` on an adapted rectangle with translate gap `j`.
///
/// Succeeds when the enclosure of `F^n` of the left wall lies strictly left of the closed
/// rectangle and that of the right wall strictly right of its `j`-translate, each with one
/// box of clearance. A passing separation additionally requires `F(A)` inside the interior
/// of the annulus `A`, otherwise the precondition error is returned.
pub fn markov_cross_check<S: Scalar>(
    f: &LiftedMap<S>,
    r: &AdaptedRectangle,
    n: usize,
    j: i64,
    margin: Margin,
) -> Result<Option<HorseshoeCertificate>> {
    if n == 0 || j < 1 {
        return Err(Error::InvalidParams("markov check needs n >= 1 and j >= 1".into()));
    }
    let fn_ = f.power(n);
    let h = r.cells.box_size();
    let (x0, x1) = r.x_range;
    let (_, left_hi, m0) = wall_image_hull(&fn_, r, false, margin)?;
    let left_gap = (x0 - h) - left_hi;
    if left_gap <= 0.0 {
        return Ok(None);
    }
    let (right_lo, _, m1) = wall_image_hull(&fn_, r, true, margin)?;
    let right_gap = right_lo - (x1 + j as f64 + h);
    if right_gap <= 0.0 {
        return Ok(None);
    }
    if !check_trap(f, &r.annulus, margin) {
        return Err(Error::PreconditionViolated("the annulus is not mapped into its interior".into()));
    }
    let m = (j + 1) as usize;
    Ok(Some(HorseshoeCertificate {
        n0: n,
        j,
        m,
        displacements: (0..=j).collect(),
        kappa: r.diameter(),
        entropy_lower: (m as f64).ln() / n as f64,
        rectangle_bounds: [x0, x1, r.y_range.0, r.y_range.1],
        depth: r.cells.depth(),
        margin: m0.max(m1),
        clearance: (left_gap, right_gap),
    }))
}

/// Outcome of a search over powers and translate gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchOutcome {
    Found {
        certificate: HorseshoeCertificate,
        /// Index into the wall pairs that were searched.
        wall_pair: usize,
    },
    NotFound { n_max: usize, j_max: i64, reason: String },
}

/// Tries `n = 1..=n_max`, then larger `j`, over the given wall pairs.
pub fn search_horseshoe<S: Scalar>(
    f: &LiftedMap<S>,
    walls: &[(JoiningContinuum, JoiningContinuum)],
    a: &crate::grid::GridSet,
    n_max: usize,
    j_max: i64,
    margin: Margin,
) -> SearchOutcome {
    let rects: Vec<(usize, AdaptedRectangle)> = walls
        .iter()
        .enumerate()
        .filter_map(|(k, (d0, d1))| Some((k, adapted_rectangle(d0, d1, a).ok().flatten()?)))
        .collect();
    if rects.is_empty() {
        return SearchOutcome::NotFound {
            n_max,
            j_max,
            reason: "no adapted rectangle between the wall candidates".into(),
        };
    }
    let mut last_err = None;
    for j in 1..=j_max {
        for n in 1..=n_max {
            for (k, r) in &rects {
                match markov_cross_check(f, r, n, j, margin) {
                    Ok(Some(certificate)) => return SearchOutcome::Found { certificate, wall_pair: *k },
                    Ok(None) => {}
                    Err(e) => last_err = Some(e.to_string()),
                }
            }
        }
    }
    SearchOutcome::NotFound {
        n_max,
        j_max,
        reason: last_err.unwrap_or_else(|| format!("separation fails for all n <= {n_max}")),
    }
}

/// Uniform point of the lifted rectangle cells.
fn sample_rect(r: &AdaptedRectangle, cells: &[(u32, u32, i64)], rng: &mut ChaCha8Rng) -> CoverPoint<f64> {
    let h = r.cells.box_size();
    let (i, j, k) = cells[rng.gen_range(0..cells.len())];
    let (x0, _, y0, _) = r.cells.rect(i, j);
    CoverPoint::new(x0 + k as f64 + h * rng.gen::<f64>(), y0 + h * rng.gen::<f64>())
}

/// Translate `v` whose abscissa range holds `x`, relative to a base offset.
fn symbol_of(cert: &HorseshoeCertificate, x: f64, offset: f64) -> Option<i64> {
    let [x0, x1, _, _] = cert.rectangle_bounds;
    cert.displacements
        .iter()
        .copied()
        .find(|&v| x >= x0 + offset + v as f64 && x <= x1 + offset + v as f64)
}

fn dist_to_rect(p: CoverPoint<f64>, b: [f64; 4], shift: f64) -> f64 {
    let dx = (b[0] + shift - p.x).max(p.x - b[1] - shift).max(0.0);
    let dy = (b[2] - p.y).max(p.y - b[3]).max(0.0);
    dx.hypot(dy)
}

/// Sampled soundness check of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskCheck {
    /// Points found in each symbol cell.
    pub per_symbol: Vec<usize>,
    pub failures: usize,
    pub attempts: usize,
}

/// Samples up to `per_symbol` points in each symbol cell and checks that their `F^n0` images
/// land in the predicted translate of the rectangle dilated by `kappa`.
pub fn desk_check<S: Scalar>(
    f: &LiftedMap<S>,
    cert: &HorseshoeCertificate,
    r: &AdaptedRectangle,
    per_symbol: usize,
    seed: u64,
) -> DeskCheck {
    let g = f.power(cert.n0);
    let cells = r.lifted_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; cert.m];
    let mut failures = 0;
    let mut attempts = 0;
    let cap = 200 * per_symbol * cert.m;
    while counts.iter().any(|&c| c < per_symbol) && attempts < cap {
        attempts += 1;
        let p = sample_rect(r, &cells, &mut rng);
        let q = g.eval(CoverPoint::new(S::lit(p.x), S::lit(p.y))).cast::<f64>();
        let Some(v) = symbol_of(cert, q.x, 0.0) else {
            continue;
        };
        let slot = &mut counts[v as usize - cert.displacements[0] as usize];
        if *slot >= per_symbol {
            continue;
        }
        *slot += 1;
        if dist_to_rect(q, cert.rectangle_bounds, v as f64) >= cert.kappa {
            failures += 1;
        }
    }
    DeskCheck {
        per_symbol: counts,
        failures,
        attempts,
    }
}

/// Displacement-bound check along sampled itineraries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItineraryCheck {
    pub samples: usize,
    pub steps_checked: usize,
    /// Itineraries that survived the full length.
    pub complete: usize,
    pub max_deviation: f64,
    pub violations: usize,
}

/// Follows sampled points through translates of the rectangle for up to `length` blocks of
/// `n0` steps and checks `|(F^{n0 k}(x) - x) - sum v| < kappa` for every block reached.
pub fn itinerary_bound_check<S: Scalar>(
    f: &LiftedMap<S>,
    cert: &HorseshoeCertificate,
    r: &AdaptedRectangle,
    length: usize,
    samples: usize,
    seed: u64,
) -> ItineraryCheck {
    let g = f.power(cert.n0);
    let cells = r.lifted_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ItineraryCheck {
        samples,
        steps_checked: 0,
        complete: 0,
        max_deviation: 0.0,
        violations: 0,
    };
    for _ in 0..samples {
        let p = sample_rect(r, &cells, &mut rng);
        let mut q = CoverPoint::new(S::lit(p.x), S::lit(p.y));
        let mut total = 0i64;
        let mut k = 0;
        while k < length {
            q = g.eval(q);
            let qf = q.cast::<f64>();
            let Some(v) = symbol_of(cert, qf.x, total as f64) else {
                break;
            };
            total += v;
            let dev = (qf.x - p.x - total as f64).hypot(qf.y - p.y);
            out.max_deviation = out.max_deviation.max(dev);
            if dev >= cert.kappa {
                out.violations += 1;
            }
            out.steps_checked += 1;
            k += 1;
        }
        if k == length {
            out.complete += 1;
        }
    }
    out
}

/// Largest tested sup-norm perturbation size keeping the certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub eta_star: f64,
    pub eta_max: f64,
    /// `eta_star == eta_max`: the probe never failed.
    pub saturated: bool,
    pub family: Vec<Perturbation>,
    pub bisection_steps: usize,
    pub note: String,
}

/// Bisects for the largest `eta` such that every perturbation of the probe family passes the
/// crossing check on the same rectangle.
pub fn robustness_probe<S: Scalar>(
    f: &LiftedMap<S>,
    r: &AdaptedRectangle,
    n: usize,
    j: i64,
    margin: Margin,
    eta_max: f64,
    tol: f64,
) -> RobustnessReport {
    let family = Perturbation::probe_family();
    let passes = |eta: f64| {
        family.iter().all(|&kind| {
            let g = sup_perturbation(f, eta, kind);
            matches!(markov_cross_check(&g, r, n, j, margin), Ok(Some(_)))
        })
    };
    let note = "empirical threshold over a finite perturbation family; not a proven neighbourhood".to_string();
    let mut steps = 0;
    if !passes(0.0) {
        return RobustnessReport { eta_star: 0.0, eta_max, saturated: false, family, bisection_steps: 0, note };
    }
    if passes(eta_max) {
        return RobustnessReport { eta_star: eta_max, eta_max, saturated: true, family, bisection_steps: 0, note };
    }
    let (mut lo, mut hi) = (0.0, eta_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    RobustnessReport { eta_star: lo, eta_max, saturated: false, family, bisection_steps: steps, note }
}
