
use crate::cover::{AnnulusPoint, CoverPoint};
use crate::error::{Error, Result};
use crate::grid::{Connectivity, GridSet};
use crate::maps::LiftedMap;
use crate::scalar::Scalar;

/// A continuum in an annulus band joining its two boundary circles without going around.
#[derive(Debug, Clone, PartialEq)]
pub struct JoiningContinuum {
    pub cells: GridSet,
    pub touches_lower: bool,
    pub touches_upper: bool,
    pub inessential: bool,
}

/// Row range of `a` plus a row-membership test for `d`.
fn boundary_rows(a: &GridSet) -> Option<(u32, u32)> {
    a.row_span()
}

fn touches_row(d: &GridSet, row: u32) -> bool {
    (0..d.cols()).any(|i| d.contains(i, row))
}

/// Some component of `a \ d` runs from the bottom row of `a` to its top row.
fn crossed_by_complement(a: &GridSet, d: &GridSet, lo: u32, hi: u32) -> Result<bool> {
    let rest = a.difference(d)?;
    Ok(rest
        .components(Connectivity::Four)
        .iter()
        .any(|c| touches_row(c, lo) && touches_row(c, hi)))
}

/// Classifies `d` as a joining continuum of the annulus band `a`.
pub fn classify_joining(d: &GridSet, a: &GridSet) -> Option<JoiningContinuum> {
    if d.is_empty() || !d.is_subset(a) {
        return None;
    }
    if d.components(Connectivity::Eight).len() != 1 {
        return None;
    }
    let (lo, hi) = boundary_rows(a)?;
    let touches_lower = touches_row(d, lo);
    let touches_upper = touches_row(d, hi);
    // essential sets separate the two boundary circles of a
    let inessential = crossed_by_complement(a, d, lo, hi).ok()?;
    (touches_lower && touches_upper && inessential).then(|| JoiningContinuum {
        cells: d.clone(),
        touches_lower,
        touches_upper,
        inessential,
    })
}

/// Circular column span `(start, length)`: the complement of the largest run of empty columns.
fn column_span(g: &GridSet) -> Option<(i64, i64)> {
    let cols = g.cols() as i64;
    let mut occ = vec![false; cols as usize];
    for (i, _) in g.iter() {
        occ[i as usize] = true;
    }
    if !occ.iter().any(|&o| o) {
        return None;
    }
    if occ.iter().all(|&o| o) {
        return Some((0, cols));
    }
    let (mut best_end, mut best_len) = (0i64, 0i64);
    let mut run = 0i64;
    // two passes handle the wrap-around gap
    for k in 0..2 * cols {
        if occ[(k % cols) as usize] {
            run = 0;
        } else {
            run += 1;
            if run > best_len && run <= cols {
                best_len = run;
                best_end = k;
            }
        }
    }
    let start = (best_end + 1).rem_euclid(cols);
    Some((start, cols - best_len))
}

/// A component of the band minus two walls, with lifts fixed on the cover.
///
/// Lifted abscissae are in cover units; wall lifts are recorded by the lifted column where
/// each wall's span begins.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedRectangle {
    pub cells: GridSet,
    pub annulus: GridSet,
    pub left_wall: GridSet,
    pub right_wall: GridSet,
    pub left_start: i64,
    pub right_start: i64,
    pub lift_anchor: CoverPoint<f64>,
    /// Lifted abscissa hull of the rectangle.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl AdaptedRectangle {
    pub fn diameter(&self) -> f64 {
        (self.x_range.1 - self.x_range.0).hypot(self.y_range.1 - self.y_range.0)
    }

    pub fn width(&self) -> f64 {
        self.x_range.1 - self.x_range.0
    }

    /// Lifted rectangles `(x0, x1, y0, y1)` of a wall's boxes.
    pub fn lifted_wall(&self, right: bool) -> Vec<(u32, u32, i64)> {
        let (wall, start) = if right {
            (&self.right_wall, self.right_start)
        } else {
            (&self.left_wall, self.left_start)
        };
        lifted_boxes(wall, start)
    }

    /// Lifted boxes of the rectangle itself.
    pub fn lifted_cells(&self) -> Vec<(u32, u32, i64)> {
        let start = (self.x_range.0 / self.cells.box_size()).round() as i64;
        lifted_boxes(&self.cells, start)
    }
}

/// `(i, j, deck shift)` for each box, lifting columns into `[start, start + cols)`.
fn lifted_boxes(g: &GridSet, start: i64) -> Vec<(u32, u32, i64)> {
    let cols = g.cols() as i64;
    g.iter()
        .map(|(i, j)| {
            let lifted = start + (i as i64 - start).rem_euclid(cols);
            (i, j, (lifted - i as i64) / cols)
        })
        .collect()
}

/// The rectangle lying to the right of `d0` and to the left of `d1` in the band `a`.
///
/// Overlapping or touching walls are a precondition violation; a missing rectangle is `None`.
pub fn adapted_rectangle(d0: &JoiningContinuum, d1: &JoiningContinuum, a: &GridSet) -> Result<Option<AdaptedRectangle>> {
    if d0.cells.dilate(1).intersects(&d1.cells) {
        return Err(Error::PreconditionViolated("walls overlap or touch".into()));
    }
    let Some((lo, hi)) = boundary_rows(a) else {
        return Ok(None);
    };
    let walls = d0.cells.union(&d1.cells)?;
    let rest = a.difference(&walls)?;
    let n0 = d0.cells.dilate(1);
    let n1 = d1.cells.dilate(1);
    let cols = a.cols() as i64;
    let (s0, len0) = column_span(&d0.cells).expect("nonempty wall");
    let (s1, _) = column_span(&d1.cells).expect("nonempty wall");
    let best = rest
        .components(Connectivity::Four)
        .into_iter()
        .filter(|c| touches_row(c, lo) && touches_row(c, hi) && c.intersects(&n0) && c.intersects(&n1))
        .filter_map(|c| column_span(&c).map(|s| (c, s)))
        .min_by_key(|(_, (s, _))| (s - s0).rem_euclid(cols));
    let Some((cells, (sr, lenr))) = best else {
        return Ok(None);
    };
    let h = a.box_size();
    let round_to = |from: i64, to: i64| from + cols * ((to - from) as f64 / cols as f64).round() as i64;
    let left_start = round_to(s0 + len0, sr) - len0;
    let right_start = round_to(s1, sr + lenr);
    let (r0, r1) = cells.row_span().expect("nonempty");
    let band = a.band();
    let y_range = (band.y_min + r0 as f64 * h, band.y_min + (r1 + 1) as f64 * h);
    let x_range = (sr as f64 * h, (sr + lenr) as f64 * h);
    Ok(Some(AdaptedRectangle {
        lift_anchor: CoverPoint::new(x_range.0, (y_range.0 + y_range.1) / 2.0),
        cells,
        annulus: a.clone(),
        left_wall: d0.cells.clone(),
        right_wall: d1.cells.clone(),
        left_start,
        right_start,
        x_range,
        y_range,
    }))
}

/// The column of `a` containing abscissa `x`.
pub fn vertical_wall(a: &GridSet, x: f64) -> GridSet {
    let mut w = a.like();
    let cols = a.cols();
    let i = ((x.rem_euclid(1.0) / a.box_size()).floor() as u32).min(cols - 1);
    for j in 0..a.rows() {
        if a.contains(i, j) {
            w.insert(i, j);
        }
    }
    w
}

/// Boxes of `a` whose centres keep `steps` forward iterates within `radius` of the column at
/// `p`, restricted to the component containing `p`.
///
/// A grid proxy for the local stable set of a fixed point; callers validate it with
/// [`classify_joining`].
pub fn stable_wall<S: Scalar>(f: &LiftedMap<S>, p: AnnulusPoint<f64>, a: &GridSet, radius: f64, steps: usize) -> Option<GridSet> {
    let keep = GridSet::from_centers(a.band(), a.depth(), |x, y| {
        if !a.locate(x, y).is_some_and(|(i, j)| a.contains(i, j)) {
            return false;
        }
        let mut q = CoverPoint::new(S::lit(x), S::lit(y));
        let base = p.x;
        let near = |q: CoverPoint<S>| crate::cover::circle_dist(q.x.to_f64_lossy(), base) <= radius;
        if !near(q) {
            return false;
        }
        for _ in 0..steps {
            q = f.eval(q);
            if !q.is_finite() || !near(q) {
                return false;
            }
        }
        true
    })
    .ok()?;
    let (i, j) = keep.locate(p.x, p.y)?;
    keep.component_of(i, j, Connectivity::Eight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::Band;

    fn annulus(depth: u8) -> GridSet {
        GridSet::horizontal_band(Band::new(-1.0, 2.0).unwrap(), depth, 0.0, 1.0).unwrap()
    }

    #[test]
    fn vertical_segment_joins() {
        let a = annulus(5);
        let d = classify_joining(&vertical_wall(&a, 0.5), &a).unwrap();
        assert!(d.touches_lower && d.touches_upper && d.inessential);
    }

    #[test]
    fn circle_is_essential() {
        let a = annulus(5);
        let ring = GridSet::horizontal_band(a.band(), 5, 0.4, 0.45).unwrap();
        assert!(classify_joining(&ring, &a).is_none());
    }

    #[test]
    fn half_segment_does_not_join() {
        let a = annulus(5);
        let half = vertical_wall(&a, 0.5).intersection(&GridSet::horizontal_band(a.band(), 5, 0.0, 0.5).unwrap()).unwrap();
        assert!(classify_joining(&half, &a).is_none());
    }

    #[test]
    fn rectangle_between_walls() {
        let a = annulus(6);
        let d0 = classify_joining(&vertical_wall(&a, 0.2), &a).unwrap();
        let d1 = classify_joining(&vertical_wall(&a, 0.7), &a).unwrap();
        let r = adapted_rectangle(&d0, &d1, &a).unwrap().unwrap();
        let h = a.box_size();
        assert!(r.x_range.0 > 0.2 - h && r.x_range.0 <= 0.2 + h);
        assert!(r.x_range.1 >= 0.7 - h && r.x_range.1 < 0.7 + h);
        assert_eq!((r.y_range.0, r.y_range.1), (0.0, 1.0));
        // swapping the walls picks the other arc, which wraps
        let r2 = adapted_rectangle(&d1, &d0, &a).unwrap().unwrap();
        assert!(r2.x_range.0 > 0.7 - h && r2.x_range.1 > 1.0 && r2.x_range.1 < 1.2 + h);
        let lw = r2.lifted_wall(true);
        assert!(lw.iter().all(|&(_, _, k)| k == 1));
    }

    #[test]
    fn overlapping_walls_are_rejected() {
        let a = annulus(6);
        let h = a.box_size();
        let d0 = classify_joining(&vertical_wall(&a, 0.2), &a).unwrap();
        let d1 = classify_joining(&vertical_wall(&a, 0.2 + h / 2.0), &a).unwrap();
        assert!(matches!(adapted_rectangle(&d0, &d1, &a), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn wrapped_span() {
        let a = annulus(4);
        let mut g = a.like();
        g.insert(15, 20);
        g.insert(0, 20);
        g.insert(1, 20);
        assert_eq!(column_span(&g), Some((15, 3)));
    }
}
