//! Outer enclosures of images, trap checks, attractor covers and complement analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::CoverPoint;
use crate::error::{Error, Result};
use crate::grid::{Connectivity, GridSet, GridSummary};
use crate::maps::LiftedMap;
use crate::scalar::Scalar;

/// Dilation applied around the sampled image of each box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Margin {
    /// `max(factor * L_b * diagonal, one box)`, `L_b` the largest sampled Jacobian norm on the box.
    Lipschitz { factor: f64 },
    /// Fixed dilation in absolute units.
    Fixed(f64),
}

impl Default for Margin {
    fn default() -> Self {
        Margin::Lipschitz { factor: 1.0 }
    }
}

/// Sample offsets within a box: four corners and the centre.
const SAMPLES: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)];

/// Sampled image bounding box `(x_lo, x_hi, y_lo, y_hi)` on the cover and the margin for one box.
pub fn box_image<S: Scalar>(f: &LiftedMap<S>, g: &GridSet, i: u32, j: u32, margin: Margin) -> (f64, f64, f64, f64, f64) {
    let (x0, _, y0, _) = g.rect(i, j);
    let h = g.box_size();
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut lip = 0.0f64;
    for (a, b) in SAMPLES {
        let p = CoverPoint::new(S::lit(x0 + a * h), S::lit(y0 + b * h));
        let (q, m) = match margin {
            Margin::Lipschitz { .. } => {
                let (q, j) = f.eval_jacobian(p);
                (q, j.norm2().to_f64_lossy())
            }
            Margin::Fixed(_) => (f.eval(p), 0.0),
        };
        let (qx, qy) = (q.x.to_f64_lossy(), q.y.to_f64_lossy());
        xl = xl.min(qx);
        xh = xh.max(qx);
        yl = yl.min(qy);
        yh = yh.max(qy);
        lip = lip.max(m);
    }
    let m = match margin {
        Margin::Lipschitz { factor } => (factor * lip * g.box_diagonal()).max(h),
        Margin::Fixed(m) => m,
    };
    (xl, xh, yl, yh, m)
}

/// Indices `k` of unit-`h` cells `[k h, (k+1) h]` meeting the open interval `(a, b)`.
fn cell_range(a: f64, b: f64, h: f64) -> (i64, i64) {
    ((a / h).floor() as i64, (b / h).ceil() as i64 - 1)
}

fn rasterize(out: &mut GridSet, xl: f64, xh: f64, j0: i64, j1: i64) {
    let h = out.box_size();
    let cols = out.cols() as i64;
    let (i0, i1) = cell_range(xl, xh, h);
    let (i0, i1) = if i1 - i0 + 1 >= cols { (0, cols - 1) } else { (i0, i1) };
    for j in j0..=j1 {
        for i in i0..=i1 {
            out.insert(i.rem_euclid(cols) as u32, j as u32);
        }
    }
}

/// Outer enclosure of `f(S)`: sampled images of each box dilated by the margin.
pub fn image_cover<S: Scalar>(f: &LiftedMap<S>, set: &GridSet, margin: Margin) -> Result<GridSet> {
    let boxes = set.boxes();
    let h = set.box_size();
    let y_min = set.band().y_min;
    let rows = set.rows() as i64;
    let chunk = (boxes.len() / (4 * rayon::current_num_threads()).max(1)).max(256);
    boxes
        .par_chunks(chunk)
        .map(|chunk| {
            let mut local = set.like();
            for &(i, j) in chunk {
                let (xl, xh, yl, yh, m) = box_image(f, set, i, j, margin);
                let (j0, j1) = cell_range(yl - m - y_min, yh + m - y_min, h);
                if j0 < 0 || j1 >= rows || !xl.is_finite() || !xh.is_finite() {
                    return Err(Error::ImageLeftBand { i, j, lo: yl - m, hi: yh + m });
                }
                rasterize(&mut local, xl - m, xh + m, j0, j1);
            }
            Ok(local)
        })
        .try_reduce(|| set.like(), |a, b| a.union(&b))
}

/// `f(A)` lies in the interior of `A`: the enclosure fits inside `A` eroded by one box.
pub fn check_trap<S: Scalar>(f: &LiftedMap<S>, a: &GridSet, margin: Margin) -> bool {
    match image_cover(f, a, margin) {
        Ok(img) => img.is_subset(&a.erode(1)),
        Err(_) => false,
    }
}

/// Controls for the subdivision algorithm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttractorOptions {
    pub max_depth: u8,
    pub box_cap: usize,
    /// Iteration cap per depth.
    pub max_iterations: usize,
    pub margin: Margin,
}

impl Default for AttractorOptions {
    fn default() -> Self {
        Self {
            max_depth: 8,
            box_cap: 4_000_000,
            max_iterations: 400,
            margin: Margin::default(),
        }
    }
}

/// Attractor covers at each depth from `A.depth()` to `max_depth`.
pub fn attractor_levels<S: Scalar>(f: &LiftedMap<S>, a: &GridSet, opts: &AttractorOptions) -> Result<Vec<GridSet>> {
    if !check_trap(f, a, opts.margin) {
        return Err(Error::PreconditionViolated(
            "trap region is not mapped into its interior".into(),
        ));
    }
    let mut levels = Vec::new();
    let mut s = a.clone();
    loop {
        for _ in 0..opts.max_iterations {
            let next = image_cover(f, &s, opts.margin)?.intersection(&s)?;
            if next == s {
                break;
            }
            s = next;
        }
        levels.push(s.clone());
        if s.depth() >= opts.max_depth {
            break;
        }
        s = s.subdivide()?;
        if s.len() > opts.box_cap {
            return Err(Error::BudgetExceeded {
                depth: s.depth(),
                boxes: s.len(),
                cap: opts.box_cap,
                partial: Box::new(levels.pop().expect("at least one level")),
            });
        }
    }
    Ok(levels)
}

/// Outer cover of the attractor of the trap region `A` at depth `max_depth`.
pub fn attractor_approx<S: Scalar>(f: &LiftedMap<S>, a: &GridSet, opts: &AttractorOptions) -> Result<GridSet> {
    Ok(attractor_levels(f, a, opts)?.pop().expect("non-empty levels"))
}

/// Components of the complement of a set within the band.
#[derive(Debug, Clone)]
pub struct ComplementAnalysis {
    pub upper_component: GridSet,
    pub lower_component: GridSet,
    pub bounded_components: Vec<GridSet>,
    pub essential: bool,
}

/// Serializable digest of a [`ComplementAnalysis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementReport {
    pub essential: bool,
    pub upper: GridSummary,
    pub lower: GridSummary,
    pub bounded_count: usize,
    pub bounded_area: f64,
    pub interior: String,
}

impl ComplementAnalysis {
    pub fn bounded_area(&self) -> f64 {
        self.bounded_components.iter().map(GridSet::area).sum()
    }

    pub fn report(&self) -> ComplementReport {
        ComplementReport {
            essential: self.essential,
            upper: self.upper_component.summary(),
            lower: self.lower_component.summary(),
            bounded_count: self.bounded_components.len(),
            bounded_area: self.bounded_area(),
            interior: format!("undetermined at resolution {}", self.upper_component.depth()),
        }
    }
}

/// Flood fill of the complement (4-connected, wrapping) with the band edges as virtual nodes.
pub fn analyze_complement(s: &GridSet) -> ComplementAnalysis {
    let comp = s.complement();
    let mut upper = s.like();
    let mut lower = s.like();
    let mut bounded = Vec::new();
    let mut straddles = false;
    for c in comp.components(Connectivity::Four) {
        let (top, bottom) = (c.touches_top(), c.touches_bottom());
        if top && bottom {
            straddles = true;
        }
        if top {
            upper = upper.union(&c).expect("same geometry");
        }
        if bottom {
            lower = lower.union(&c).expect("same geometry");
        }
        if !top && !bottom {
            bounded.push(c);
        }
    }
    let essential = !upper.is_empty() && !lower.is_empty() && !straddles;
    ComplementAnalysis {
        upper_component: upper,
        lower_component: lower,
        bounded_components: bounded,
        essential,
    }
}
