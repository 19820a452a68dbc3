//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Runs without the libtest harness so the lines always print.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotolab_core::attractor::{attractor_approx, AttractorOptions, Margin};
use rotolab_core::entropy::norm_growth_upper;
use rotolab_core::horseshoe::{
    adapted_rectangle, chain_reachable, classify_joining, markov_cross_check, robustness_probe, vertical_wall,
    AdaptedRectangle, ChainOptions, HorseshoeCertificate,
};
use rotolab_core::maps::{affine_horseshoe, integrable_twist, AffineHorseshoeParams};
use rotolab_core::rotation::orbit_rotation_number;
use rotolab_core::theorem_b::{
    build_dissipative, build_dissipative_connector, build_f1, build_f2, build_final, run_dissipative, run_pipeline,
    PipelineParams, PipelineRun,
};
use rotolab_core::{AnnulusPoint, Band, CoverPoint, GridSet, LiftedMap};

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line { pass, detail: detail.into() }
}

fn timed(budget: Duration, f: impl FnOnce() -> Line) -> (Line, Duration) {
    let t = Instant::now();
    let mut l = f();
    let el = t.elapsed();
    if el > budget {
        l.pass = false;
        l.detail += &format!("; over budget {:.0?}", budget);
    }
    (l, el)
}

fn twist_exactness() -> Line {
    let t = integrable_twist::<f64>();
    let band = Band::new(-1.0, 2.0).unwrap();
    let mut worst = 0.0f64;
    for h in [0.0, 1.0 / 3.0, 0.5, 1.0] {
        let r = orbit_rotation_number(&t, AnnulusPoint::new(0.3, h), 1000, &band).unwrap();
        worst = worst.max((r - h).abs());
    }
    line(worst < 1e-9, format!("max |rho - height| = {worst:.2e} (tol 1e-9)"))
}

fn entropy_decay() -> Line {
    let t = integrable_twist::<f64>();
    let region = GridSet::horizontal_band(Band::new(-1.0, 2.0).unwrap(), 3, 0.0, 1.0).unwrap();
    let ns: Vec<usize> = (3..=10).map(|k| 1 << k).collect();
    let vals: Vec<f64> = ns.iter().map(|&n| norm_growth_upper(&t, &region, n).unwrap()).collect();
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let n = 1024f64;
    let closed = 2.0 / n * ((n + (n * n + 4.0).sqrt()) / 2.0).ln();
    let err = (vals[vals.len() - 1] - closed).abs();
    line(
        decreasing && err < 1e-6,
        format!("decreasing {decreasing}, value at 1024 = {:.6} vs {closed:.6} (err {err:.1e})", vals[vals.len() - 1]),
    )
}

fn model_rectangle(depth: u8) -> AdaptedRectangle {
    let a = GridSet::horizontal_band(Band::new(-1.0, 2.0).unwrap(), depth, 0.0, 1.0).unwrap();
    let d0 = classify_joining(&vertical_wall(&a, 0.2), &a).unwrap();
    let d1 = classify_joining(&vertical_wall(&a, 0.8), &a).unwrap();
    adapted_rectangle(&d0, &d1, &a).unwrap().unwrap()
}

/// Preimage of `i + v` under the expanding branch `x -> 0.1 + 3 (x - 0.2)`, clipped to `r`.
fn pull(i: (f64, f64), v: i64, r: (f64, f64)) -> Option<(f64, f64)> {
    let back = |x: f64| (x + v as f64 - 0.1) / 3.0 + 0.2;
    let (lo, hi) = (back(i.0).max(r.0), back(i.1).min(r.1));
    (lo < hi).then_some((lo, hi))
}

fn cylinder(word: &[i64], r: (f64, f64)) -> Option<(f64, f64)> {
    word.iter().rev().try_fold(r, |i, &v| pull(i, v, r))
}

fn horseshoe_certificate() -> (Line, Option<(HorseshoeCertificate, AdaptedRectangle)>) {
    let f = affine_horseshoe::<f64>(&AffineHorseshoeParams::default()).unwrap();
    let r = model_rectangle(8);
    let Some(c) = markov_cross_check(&f, &r, 1, 1, Margin::default()).unwrap() else {
        return (line(false, "no certificate on the affine model"), None);
    };
    let shape = c.m == 2 && c.displacements == vec![0, 1] && (c.entropy_lower - 2f64.ln()).abs() < 1e-12;
    let [x0, x1, y0, y1] = c.rectangle_bounds;
    let rx = (x0, x1);
    // heights: y -> 1/3 + y/3 must keep the rectangle's y-range
    let y_ok = 1.0 / 3.0 + y0 / 3.0 >= y0 && 1.0 / 3.0 + y1 / 3.0 <= y1;
    let mut empty = 0;
    let mut orbit_mismatch = 0;
    for code in 0u32..1024 {
        let word: Vec<i64> = (0..10).map(|k| ((code >> k) & 1) as i64).collect();
        match cylinder(&word, rx) {
            None => empty += 1,
            Some((lo, hi)) => {
                let mut p = CoverPoint::new(0.5 * (lo + hi), 0.5 * (y0 + y1));
                let mut shift = 0;
                for &v in &word {
                    p = f.eval(p);
                    shift += v;
                    if !(p.x >= x0 + shift as f64 && p.x <= x1 + shift as f64 && p.y >= y0 && p.y <= y1) {
                        orbit_mismatch += 1;
                        break;
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bound_fail = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let word: Vec<i64> = (0..10).map(|_| rng.gen_range(0..2)).collect();
        let Some((lo, hi)) = cylinder(&word, rx) else {
            bound_fail += 1;
            continue;
        };
        let start = CoverPoint::new(lo + (hi - lo) * rng.gen::<f64>(), y0 + (y1 - y0) * rng.gen::<f64>());
        let mut p = start;
        let mut sum = 0;
        for &v in &word {
            p = f.eval(p);
            sum += v;
            let dev = ((p.x - start.x) - sum as f64).abs();
            worst = worst.max(dev);
            if dev >= c.kappa {
                bound_fail += 1;
                break;
            }
        }
    }
    let t = integrable_twist::<f64>();
    let tr = model_rectangle(7);
    let control = (1..=4).all(|n| markov_cross_check(&t, &tr, n, 1, Margin::default()).unwrap().is_none());
    let pass = shape && y_ok && empty == 0 && orbit_mismatch == 0 && bound_fail == 0 && control;
    let detail = format!(
        "m = {}, displacements {:?}, lower {:.6}; {} of 1024 cylinders empty, {} orbit mismatches; \
         1000 itineraries: {} bound failures, max deviation {:.3} < kappa {:.3}; twist control none: {}",
        c.m,
        c.displacements,
        c.entropy_lower,
        empty,
        orbit_mismatch,
        bound_fail,
        worst,
        c.kappa,
        control
    );
    (line(pass, detail), Some((c, r)))
}

fn theorem_b(p: &PipelineParams) -> (Line, Option<PipelineRun>) {
    let run = match run_pipeline::<f64>(p) {
        Ok(r) => r,
        Err(e) => return (line(false, format!("pipeline error: {e}")), None),
    };
    let rep = &run.report;
    let f1 = build_f1::<f64>(p).unwrap();
    let f2 = build_f2(&f1.map, p).unwrap();
    let f = build_final(&f2.map, p).unwrap().map;
    // residuals recomputed from the map, not taken from the search
    let residuals: Vec<f64> = rep
        .witnesses
        .iter()
        .map(|w| match w {
            Some(w) => {
                let z = CoverPoint::new(w.point.x, w.point.y);
                let q = f.eval(z);
                (q.x - z.x - w.shift as f64).hypot(q.y - z.y)
            }
            None => f64::INFINITY,
        })
        .collect();
    let shifts: Vec<i64> = rep.witnesses.iter().flatten().map(|w| w.shift).collect();
    let witnesses_ok = shifts == vec![0, 1] && residuals.iter().all(|&r| r < 1e-8);
    let rot = &rep.rotation;
    let rot_ok = rot.rho_min <= 0.05 && rot.rho_max >= 0.95;
    let ess = rep.complement.essential && run.attractor.depth() >= 8;
    let ent = rep.entropy.upper < 0.1;
    let pass = rep.pass && rep.trap && ess && rot_ok && witnesses_ok && ent;
    let detail = format!(
        "trap {}, essential {} at depth {}, rotation [{:.4}, {:.4}], witness residuals {:.1e} / {:.1e}, entropy upper {:.4}, clauses {}",
        rep.trap,
        rep.complement.essential,
        run.attractor.depth(),
        rot.rho_min,
        rot.rho_max,
        residuals[0],
        residuals[1],
        rep.entropy.upper,
        if rep.pass { "all pass" } else { "some fail" }
    );
    (line(pass, detail), Some(run))
}

fn dissipative(p: &PipelineParams) -> Line {
    let run = match run_dissipative::<f64>(p) {
        Ok(r) => r,
        Err(e) => return line(false, format!("dissipative error: {e}")),
    };
    let rep = &run.report;
    let f1 = build_f1::<f64>(p).unwrap();
    let g = build_dissipative(&build_dissipative_connector(&f1.map, p).unwrap(), 16).unwrap();
    // central-difference determinant and twist at random points of S^1 x [-1, 2]
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let (mut det_max, mut twist_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..10_000 {
        let (x, y) = (rng.gen::<f64>(), -1.0 + 3.0 * rng.gen::<f64>());
        let dx = (g.eval(CoverPoint::new(x + h, y)), g.eval(CoverPoint::new(x - h, y)));
        let dy = (g.eval(CoverPoint::new(x, y + h)), g.eval(CoverPoint::new(x, y - h)));
        let (a, c) = ((dx.0.x - dx.1.x) / (2.0 * h), (dx.0.y - dx.1.y) / (2.0 * h));
        let (b, d) = ((dy.0.x - dy.1.x) / (2.0 * h), (dy.0.y - dy.1.y) / (2.0 * h));
        det_max = det_max.max(a * d - b * c);
        twist_min = twist_min.min(b);
    }
    let bound = 1.0 - 1.0 / 32.0;
    let rot = &rep.rotation;
    let pass = rep.pass && det_max < bound && twist_min > 0.0 && rep.check.trap && rot.rho_min <= 0.1 && rot.rho_max >= 0.9;
    line(
        pass,
        format!(
            "n = 16: sampled det max {det_max:.5} < {bound:.5}, twist min {twist_min:.4}, trap {}, rotation [{:.4}, {:.4}]",
            rep.check.trap, rot.rho_min, rot.rho_max
        ),
    )
}

fn enters(f: &LiftedMap<f64>, z: CoverPoint<f64>, d: (f64, f64), backward: bool) -> bool {
    let mut q = z;
    for _ in 0..=1000 {
        if q.y > d.0 && q.y < d.1 {
            return true;
        }
        q = if backward {
            match f.inverse(q, 1e-13) {
                Ok(p) => p,
                Err(_) => return false,
            }
        } else {
            f.eval(q)
        };
    }
    false
}

fn chains(p: &PipelineParams) -> Line {
    let f1 = build_f1::<f64>(p).unwrap();
    let f2 = build_f2(&f1.map, p).unwrap().map;
    let d = p.strip_bounds;
    let band = p.band().unwrap();
    let k = GridSet::horizontal_band(band, 6, d.0, d.1).unwrap();
    let eps = 1.5 * k.box_diagonal();
    let opts = ChainOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut draw = |backward: bool| loop {
        let z = CoverPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
        if enters(&f2, z, d, backward) {
            return AnnulusPoint::new(z.x, z.y);
        }
    };
    let mut ok = 0;
    for _ in 0..20 {
        let (z, w) = (draw(false), draw(true));
        if chain_reachable(&f2, z, w, &k, eps, &opts).unwrap() {
            ok += 1;
        }
    }
    let t = integrable_twist::<f64>();
    let empty = GridSet::empty(band, 6).unwrap();
    let control = chain_reachable(&t, AnnulusPoint::new(0.1, 0.2), AnnulusPoint::new(0.1, 0.8), &empty, eps, &opts).unwrap();
    line(ok == 20 && !control, format!("{ok}/20 pairs chain through D = ({}, {}); twist with K empty chains: {control}", d.0, d.1))
}

fn containment(f: &LiftedMap<f64>, cover: &GridSet, seed: u64) -> usize {
    let grown = cover.dilate(1);
    let boxes = cover.boxes();
    let h = cover.box_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut escapes = 0;
    for _ in 0..1000 {
        let (i, j) = boxes[rng.gen_range(0..boxes.len())];
        let (x0, _, y0, _) = cover.rect(i, j);
        let mut q = CoverPoint::new(x0 + h * rng.gen::<f64>(), y0 + h * rng.gen::<f64>());
        for _ in 0..100 {
            q = f.eval(q);
            if !grown.contains_point(AnnulusPoint::new(q.x, q.y)) {
                escapes += 1;
                break;
            }
        }
    }
    escapes
}

fn soundness(p: &PipelineParams, run: Option<&PipelineRun>) -> Line {
    let Some(run) = run else {
        return line(false, "no Theorem B cover (criterion 4 errored)");
    };
    let f1 = build_f1::<f64>(p).unwrap();
    let f2 = build_f2(&f1.map, p).unwrap();
    let f = build_final(&f2.map, p).unwrap().map;
    let opts = AttractorOptions {
        max_depth: 8,
        ..AttractorOptions::default()
    };
    let c1 = attractor_approx(&f1.map, &p.trap_region().unwrap(), &opts).unwrap();
    let e1 = containment(&f1.map, &c1, 31);
    let e = containment(&f, &run.attractor, 37);
    line(
        e1 == 0 && e == 0 && c1.depth() == 8 && run.attractor.depth() == 8,
        format!("escapes after 100 steps from 1000 orbits: f1 {e1}, f {e} (depth-8 covers, one-box dilation)"),
    )
}

fn robustness(cert: Option<&(HorseshoeCertificate, AdaptedRectangle)>) -> Line {
    let Some((c, r)) = cert else {
        return line(false, "no certificate from criterion 3");
    };
    let f = affine_horseshoe::<f64>(&AffineHorseshoeParams::default()).unwrap();
    let rep = robustness_probe(&f, r, c.n0, c.j, Margin::default(), 0.2, 1e-4);
    line(
        rep.eta_star > 0.0,
        format!("eta* = {:.4} (cap {}, saturated {}, {} bisection steps)", rep.eta_star, rep.eta_max, rep.saturated, rep.bisection_steps),
    )
}

fn main() {
    let p = PipelineParams::default();
    let mut results = Vec::new();
    let mut report = |k: usize, name: &str, (l, el): (Line, Duration)| {
        println!(
            "criterion {k} [{name}]: {} ({:.2} s) {}",
            if l.pass { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            l.detail
        );
        results.push(l.pass);
    };
    report(1, "twist rotation exactness", timed(Duration::from_secs(1), twist_exactness));
    report(2, "entropy upper-bound decay", timed(Duration::from_secs(5), entropy_decay));
    let mut cert = None;
    report(
        3,
        "horseshoe certificate",
        timed(Duration::from_secs(10), || {
            let (l, c) = horseshoe_certificate();
            cert = c;
            l
        }),
    );
    let mut run = None;
    report(
        4,
        "theorem B pipeline",
        timed(Duration::from_secs(600), || {
            let (l, r) = theorem_b(&p);
            run = r;
            l
        }),
    );
    report(5, "dissipative variant", timed(Duration::from_secs(600), || dissipative(&p)));
    report(6, "epsilon-chain lemma", timed(Duration::from_secs(30), || chains(&p)));
    report(7, "attractor soundness", timed(Duration::from_secs(600), || soundness(&p, run.as_ref())));
    report(8, "robustness probe", timed(Duration::from_secs(600), || robustness(cert.as_ref())));
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
