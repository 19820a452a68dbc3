//! Dyadic box sets over a truncated annulus.

use std::collections::VecDeque;
use std::fmt::Write as _;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{wrap_unit, AnnulusPoint, Band};
use crate::error::{Error, Result};

/// Box adjacency used by flood fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Finite union of boxes of side `2^-depth` over `S^1 x band`, stored as a row-major bitmap.
///
/// Column `i` covers `[i h, (i+1) h]` on the circle, row `j` covers
/// `[y_min + j h, y_min + (j+1) h]`. The grid geometry is dyadic, so it is kept in `f64`
/// whatever scalar the maps use.
#[derive(Clone, PartialEq)]
pub struct GridSet {
    depth: u8,
    band: Band<f64>,
    rows: u32,
    cols: u32,
    bits: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for GridSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "GridSet(depth={}, band=[{}, {}], {} boxes)",
            self.depth,
            self.band.y_min,
            self.band.y_max,
            self.len()
        )
    }
}

/// Compact description of a grid set for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub depth: u8,
    pub boxes: usize,
    pub area: f64,
    pub y_lo: Option<f64>,
    pub y_hi: Option<f64>,
}

const MAX_DEPTH: u8 = 16;

impl GridSet {
    pub fn empty(band: Band<f64>, depth: u8) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::InvalidParams(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        let cols = 1u32 << depth;
        let rows = (band.height() * cols as f64 - 1e-9).ceil().max(1.0) as u32;
        Ok(Self {
            depth,
            band,
            rows,
            cols,
            bits: bitvec![u64, Lsb0; 0; (rows as usize) * (cols as usize)],
        })
    }

    pub fn full(band: Band<f64>, depth: u8) -> Result<Self> {
        let mut g = Self::empty(band, depth)?;
        g.bits.fill(true);
        Ok(g)
    }

    /// All boxes whose height range meets the open interval `(y0, y1)`.
    pub fn horizontal_band(band: Band<f64>, depth: u8, y0: f64, y1: f64) -> Result<Self> {
        let mut g = Self::empty(band, depth)?;
        let h = g.box_size();
        for j in 0..g.rows {
            let lo = band.y_min + j as f64 * h;
            if lo < y1 && lo + h > y0 {
                for i in 0..g.cols {
                    g.insert(i, j);
                }
            }
        }
        Ok(g)
    }

    /// Boxes whose centre satisfies the predicate.
    pub fn from_centers(band: Band<f64>, depth: u8, pred: impl Fn(f64, f64) -> bool) -> Result<Self> {
        let mut g = Self::empty(band, depth)?;
        for j in 0..g.rows {
            for i in 0..g.cols {
                let (x, y) = g.center(i, j);
                if pred(x, y) {
                    g.insert(i, j);
                }
            }
        }
        Ok(g)
    }

    /// Empty set with the same geometry.
    pub fn like(&self) -> Self {
        Self {
            depth: self.depth,
            band: self.band,
            rows: self.rows,
            cols: self.cols,
            bits: bitvec![u64, Lsb0; 0; self.bits.len()],
        }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }
    pub fn band(&self) -> Band<f64> {
        self.band
    }
    pub fn rows(&self) -> u32 {
        self.rows
    }
    pub fn cols(&self) -> u32 {
        self.cols
    }
    /// Side length `2^-depth`.
    pub fn box_size(&self) -> f64 {
        1.0 / self.cols as f64
    }
    pub fn box_diagonal(&self) -> f64 {
        self.box_size() * std::f64::consts::SQRT_2
    }
    /// Top of the last row (at least `band.y_max`).
    pub fn y_top(&self) -> f64 {
        self.band.y_min + self.rows as f64 * self.box_size()
    }

    #[inline]
    fn idx(&self, i: u32, j: u32) -> usize {
        j as usize * self.cols as usize + i as usize
    }

    #[inline]
    pub fn contains(&self, i: u32, j: u32) -> bool {
        i < self.cols && j < self.rows && self.bits[self.idx(i, j)]
    }

    #[inline]
    pub fn insert(&mut self, i: u32, j: u32) {
        let k = self.idx(i, j);
        self.bits.set(k, true);
    }

    pub fn remove(&mut self, i: u32, j: u32) {
        let k = self.idx(i, j);
        self.bits.set(k, false);
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn area(&self) -> f64 {
        self.len() as f64 * self.box_size() * self.box_size()
    }

    /// Boxes in canonical row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let cols = self.cols as usize;
        self.bits
            .iter_ones()
            .map(move |k| ((k % cols) as u32, (k / cols) as u32))
    }

    pub fn boxes(&self) -> Vec<(u32, u32)> {
        self.iter().collect()
    }

    /// `[x0, x1] x [y0, y1]` of a box.
    pub fn rect(&self, i: u32, j: u32) -> (f64, f64, f64, f64) {
        let h = self.box_size();
        let x0 = i as f64 * h;
        let y0 = self.band.y_min + j as f64 * h;
        (x0, x0 + h, y0, y0 + h)
    }

    pub fn center(&self, i: u32, j: u32) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.rect(i, j);
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    /// Box containing an annulus point, if inside the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let h = self.box_size();
        let jf = ((y - self.band.y_min) / h).floor();
        if !(jf >= 0.0 && jf < self.rows as f64) {
            return None;
        }
        let i = ((wrap_unit(x) / h).floor() as i64).clamp(0, self.cols as i64 - 1) as u32;
        Some((i, jf as u32))
    }

    /// Centres of `boxes` followed by their distinct lattice corners.
    pub fn centers_and_corners(&self, boxes: impl IntoIterator<Item = (u32, u32)>) -> Vec<(f64, f64)> {
        let h = self.box_size();
        let cols = self.cols() as usize;
        let mut seen = vec![false; cols * (self.rows() as usize + 1)];
        let mut out = Vec::new();
        for (i, j) in boxes {
            out.push(self.center(i, j));
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let ci = (i as usize + di) % cols;
                let cj = j as usize + dj;
                let k = cj * cols + ci;
                if !seen[k] {
                    seen[k] = true;
                    out.push((ci as f64 * h, self.band().y_min + cj as f64 * h));
                }
            }
        }
        out
    }

    pub fn contains_point(&self, p: AnnulusPoint<f64>) -> bool {
        self.locate(p.x, p.y).is_some_and(|(i, j)| self.contains(i, j))
    }

    fn check_compatible(&self, o: &Self) -> Result<()> {
        if self.depth != o.depth || self.rows != o.rows || self.band != o.band {
            return Err(Error::PreconditionViolated(format!(
                "grid sets differ in geometry: {self:?} vs {o:?}"
            )));
        }
        Ok(())
    }

    pub fn union(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let mut r = self.clone();
        r.bits |= &o.bits;
        Ok(r)
    }

    pub fn intersection(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let mut r = self.clone();
        r.bits &= &o.bits;
        Ok(r)
    }

    pub fn difference(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let mut r = self.clone();
        let inv = !o.bits.clone();
        r.bits &= &inv;
        Ok(r)
    }

    pub fn complement(&self) -> Self {
        let mut r = self.clone();
        r.bits = !r.bits;
        r
    }

    pub fn is_subset(&self, o: &Self) -> bool {
        self.check_compatible(o).is_ok() && self.bits.iter_ones().all(|k| o.bits[k])
    }

    pub fn intersects(&self, o: &Self) -> bool {
        self.check_compatible(o).is_ok() && self.bits.iter_ones().any(|k| o.bits[k])
    }

    /// Adds every box within Chebyshev distance `r` (wrapping in the circle direction).
    pub fn dilate(&self, r: u32) -> Self {
        if r == 0 {
            return self.clone();
        }
        // separable: horizontal then vertical
        let mut horiz = self.like();
        let cols = self.cols as i64;
        for (i, j) in self.iter() {
            if 2 * r as i64 + 1 >= cols {
                for ii in 0..self.cols {
                    horiz.insert(ii, j);
                }
                continue;
            }
            for d in -(r as i64)..=(r as i64) {
                horiz.insert((i as i64 + d).rem_euclid(cols) as u32, j);
            }
        }
        let mut out = horiz.like();
        for (i, j) in horiz.iter() {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(self.rows - 1);
            for jj in lo..=hi {
                out.insert(i, jj);
            }
        }
        out
    }

    /// Keeps boxes whose whole `r`-neighbourhood lies in the set; outside the band counts as absent.
    pub fn erode(&self, r: u32) -> Self {
        if r == 0 {
            return self.clone();
        }
        let mut c = self.complement().dilate(r);
        // boxes within r rows of the band edge touch the outside
        for j in 0..self.rows.min(r) {
            for i in 0..self.cols {
                c.insert(i, j);
                c.insert(i, self.rows - 1 - j);
            }
        }
        c.complement()
    }

    /// Refines every box into its four children.
    pub fn subdivide(&self) -> Result<Self> {
        let mut out = Self::empty(self.band, self.depth + 1)?;
        for (i, j) in self.iter() {
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (ci, cj) = (2 * i + di, 2 * j + dj);
                if cj < out.rows {
                    out.insert(ci, cj);
                }
            }
        }
        Ok(out)
    }

    /// Parent set at `depth - 1`: a parent is present when any child is.
    pub fn coarsen(&self) -> Result<Self> {
        if self.depth == 0 {
            return Err(Error::InvalidParams("cannot coarsen depth 0".into()));
        }
        let mut out = Self::empty(self.band, self.depth - 1)?;
        for (i, j) in self.iter() {
            if j / 2 < out.rows {
                out.insert(i / 2, j / 2);
            }
        }
        Ok(out)
    }

    /// Re-expresses the set at another depth (refining or coarsening step by step).
    pub fn at_depth(&self, depth: u8) -> Result<Self> {
        let mut g = self.clone();
        while g.depth < depth {
            g = g.subdivide()?;
        }
        while g.depth > depth {
            g = g.coarsen()?;
        }
        Ok(g)
    }

    fn neighbours(&self, i: u32, j: u32, conn: Connectivity, out: &mut Vec<(u32, u32)>) {
        out.clear();
        let cols = self.cols as i64;
        let deltas: &[(i64, i64)] = match conn {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        };
        for &(di, dj) in deltas {
            let jj = j as i64 + dj;
            if jj < 0 || jj >= self.rows as i64 {
                continue;
            }
            let ii = (i as i64 + di).rem_euclid(cols) as u32;
            if ii == i && di != 0 {
                continue;
            }
            out.push((ii, jj as u32));
        }
    }

    /// Connected components (circle direction wraps), in order of their first box.
    pub fn components(&self, conn: Connectivity) -> Vec<GridSet> {
        let mut seen = bitvec![u64, Lsb0; 0; self.bits.len()];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        let mut nb = Vec::with_capacity(8);
        for (i, j) in self.iter() {
            let k = self.idx(i, j);
            if seen[k] {
                continue;
            }
            let mut comp = self.like();
            seen.set(k, true);
            queue.push_back((i, j));
            while let Some((a, b)) = queue.pop_front() {
                comp.insert(a, b);
                self.neighbours(a, b, conn, &mut nb);
                for &(c, d) in &nb {
                    let kk = self.idx(c, d);
                    if self.bits[kk] && !seen[kk] {
                        seen.set(kk, true);
                        queue.push_back((c, d));
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Component containing the given box.
    pub fn component_of(&self, i: u32, j: u32, conn: Connectivity) -> Option<GridSet> {
        if !self.contains(i, j) {
            return None;
        }
        let mut comp = self.like();
        let mut queue = VecDeque::from([(i, j)]);
        comp.insert(i, j);
        let mut nb = Vec::with_capacity(8);
        while let Some((a, b)) = queue.pop_front() {
            self.neighbours(a, b, conn, &mut nb);
            for &(c, d) in &nb {
                if self.contains(c, d) && !comp.contains(c, d) {
                    comp.insert(c, d);
                    queue.push_back((c, d));
                }
            }
        }
        Some(comp)
    }

    pub fn touches_bottom(&self) -> bool {
        (0..self.cols).any(|i| self.contains(i, 0))
    }

    pub fn touches_top(&self) -> bool {
        (0..self.cols).any(|i| self.contains(i, self.rows - 1))
    }

    /// Lowest and highest occupied row.
    pub fn row_span(&self) -> Option<(u32, u32)> {
        let mut it = self.iter();
        let first = it.next()?.1;
        let last = self.bits.last_one().map(|k| (k / self.cols as usize) as u32)?;
        Some((first, last))
    }

    pub fn summary(&self) -> GridSummary {
        let span = self.row_span();
        let h = self.box_size();
        GridSummary {
            depth: self.depth,
            boxes: self.len(),
            area: self.area(),
            y_lo: span.map(|(a, _)| self.band.y_min + a as f64 * h),
            y_hi: span.map(|(_, b)| self.band.y_min + (b + 1) as f64 * h),
        }
    }

    /// Binary run-length encoding of the row-major bitmap.
    pub fn to_rle(&self) -> Vec<u8> {
        let mut runs: Vec<u32> = Vec::new();
        let mut cur = false;
        let mut n = 0u32;
        for b in self.bits.iter().by_vals() {
            if b == cur {
                n += 1;
            } else {
                runs.push(n);
                cur = b;
                n = 1;
            }
        }
        runs.push(n);
        let mut out = Vec::with_capacity(33 + 4 * runs.len());
        out.extend_from_slice(b"RGS1");
        out.push(self.depth);
        out.extend_from_slice(&self.band.y_min.to_le_bytes());
        out.extend_from_slice(&self.band.y_max.to_le_bytes());
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
        for r in runs {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_rle(data: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidParams(format!("malformed grid encoding: {m}"));
        if data.len() < 33 || &data[..4] != b"RGS1" {
            return Err(bad("header"));
        }
        let depth = data[4];
        let f = |o: usize| f64::from_le_bytes(data[o..o + 8].try_into().unwrap());
        let u = |o: usize| u32::from_le_bytes(data[o..o + 4].try_into().unwrap());
        let band = Band::new(f(5), f(13))?;
        let mut g = Self::empty(band, depth)?;
        if g.rows != u(21) || g.cols != u(25) {
            return Err(bad("dimensions"));
        }
        let nruns = u(29) as usize;
        if data.len() != 33 + 4 * nruns {
            return Err(bad("length"));
        }
        let mut pos = 0usize;
        let mut val = false;
        for r in 0..nruns {
            let n = u(33 + 4 * r) as usize;
            if pos + n > g.bits.len() {
                return Err(bad("run overflow"));
            }
            if val {
                g.bits[pos..pos + n].fill(true);
            }
            pos += n;
            val = !val;
        }
        if pos != g.bits.len() {
            return Err(bad("run total"));
        }
        Ok(g)
    }

    /// SVG figure with one rectangle per box; circle direction horizontal, height upward.
    pub fn to_svg(&self, title: &str) -> String {
        let scale = 800.0;
        let h = self.box_size();
        let height = (self.y_top() - self.band.y_min) * scale;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
            scale,
            height,
            scale,
            height
        );
        let _ = writeln!(s, "<title>{}</title>", xml_escape(title));
        let _ = writeln!(s, r##"<rect x="0" y="0" width="{scale:.3}" height="{height:.3}" fill="#ffffff"/>"##);
        let _ = writeln!(s, r##"<g fill="#1f4e79" shape-rendering="crispEdges">"##);
        let w = h * scale;
        for (i, j) in self.iter() {
            let x = i as f64 * w;
            let y = height - (j + 1) as f64 * w;
            let _ = writeln!(s, r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{w:.3}"/>"#);
        }
        let _ = writeln!(s, "</g>");
        for y in [0.0, 1.0] {
            if y > self.band.y_min && y < self.y_top() {
                let yy = height - (y - self.band.y_min) * scale;
                let _ = writeln!(
                    s,
                    r##"<line x1="0" y1="{yy:.3}" x2="{scale:.3}" y2="{yy:.3}" stroke="#c0392b" stroke-width="1" stroke-dasharray="4 3"/>"##
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
