use std::collections::VecDeque;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{AnnulusPoint, CoverPoint};
use crate::error::{Error, Result};
use crate::grid::GridSet;
use crate::maps::LiftedMap;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Length of the true orbit segments of `z` (forward) and `w` (backward) used as endpoints.
    pub horizon: usize,
    pub inverse_tol: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            horizon: 1000,
            inverse_tol: 1e-12,
        }
    }
}

fn orbit_boxes<S: Scalar>(
    grid: &GridSet,
    start: AnnulusPoint<f64>,
    steps: usize,
    mut step: impl FnMut(CoverPoint<S>) -> Option<CoverPoint<S>>,
) -> Vec<usize> {
    let cols = grid.cols() as usize;
    let mut out = Vec::new();
    let mut q = CoverPoint::new(S::lit(start.x), S::lit(start.y));
    for k in 0..=steps {
        let Some((i, j)) = grid.locate(q.x.to_f64_lossy(), q.y.to_f64_lossy()) else {
            break;
        };
        out.push(j as usize * cols + i as usize);
        if k == steps {
            break;
        }
        match step(q) {
            Some(n) if n.is_finite() => q = n,
            _ => break,
        }
    }
    out
}

/// Distance from a point to a box, measured on the circle in the first coordinate.
fn dist_to_box(px: f64, py: f64, rect: (f64, f64, f64, f64)) -> f64 {
    let (x0, x1, y0, y1) = rect;
    let c = (x0 + x1) / 2.0;
    let dxc = crate::cover::circle_dist(px, c);
    let dx = (dxc - (x1 - x0) / 2.0).max(0.0);
    let dy = (y0 - py).max(py - y1).max(0.0);
    dx.hypot(dy)
}

/// Decides `z -|_K w` at grid resolution.
///
/// Nodes are all boxes of the band of `k`. A box `b` always has an edge to the box containing
/// `f(centre b)`; when that point lies in `K`, it also has edges to every box of `K` within
/// `eps` of it. The chain starts anywhere on the forward orbit of `z` and ends anywhere on the
/// backward orbit of `w`, both over `opts.horizon` steps.
pub fn chain_reachable<S: Scalar>(
    f: &LiftedMap<S>,
    z: AnnulusPoint<f64>,
    w: AnnulusPoint<f64>,
    k: &GridSet,
    eps: f64,
    opts: &ChainOptions,
) -> Result<bool> {
    if eps < k.box_diagonal() {
        return Err(Error::InvalidParams(format!(
            "eps {eps:.3e} is below the box diagonal {:.3e}",
            k.box_diagonal()
        )));
    }
    let cols = k.cols() as usize;
    let rows = k.rows() as usize;
    let h = k.box_size();
    let tol = S::lit(opts.inverse_tol);
    let starts = orbit_boxes::<S>(k, z, opts.horizon, |q| Some(f.eval(q)));
    let mut target = bitvec![u64, Lsb0; 0; cols * rows];
    for b in orbit_boxes::<S>(k, w, opts.horizon, |q| f.inverse(q, tol).ok()) {
        target.set(b, true);
    }
    let mut seen = bitvec![u64, Lsb0; 0; cols * rows];
    let mut queue = VecDeque::new();
    for b in starts {
        if !seen[b] {
            seen.set(b, true);
            queue.push_back(b);
        }
    }
    let reach = (eps / h).ceil() as i64 + 1;
    while let Some(b) = queue.pop_front() {
        if target[b] {
            return Ok(true);
        }
        let (i, j) = ((b % cols) as u32, (b / cols) as u32);
        let (cx, cy) = k.center(i, j);
        let q = f.eval(CoverPoint::new(S::lit(cx), S::lit(cy)));
        let (qx, qy) = (q.x.to_f64_lossy(), q.y.to_f64_lossy());
        let Some((ti, tj)) = k.locate(qx, qy) else {
            continue;
        };
        let mut visit = |n: usize, queue: &mut VecDeque<usize>| {
            if !seen[n] {
                seen.set(n, true);
                queue.push_back(n);
            }
        };
        visit(tj as usize * cols + ti as usize, &mut queue);
        if !k.contains(ti, tj) {
            continue;
        }
        for dj in -reach..=reach {
            let jj = tj as i64 + dj;
            if jj < 0 || jj >= rows as i64 {
                continue;
            }
            for di in -reach..=reach {
                let ii = (ti as i64 + di).rem_euclid(cols as i64) as u32;
                let jj = jj as u32;
                if k.contains(ii, jj) && dist_to_box(qx, qy, k.rect(ii, jj)) < eps {
                    visit(jj as usize * cols + ii as usize, &mut queue);
                }
            }
        }
    }
    Ok(false)
}
