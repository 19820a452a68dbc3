use serde::{Deserialize, Serialize};

use super::build::*;
use super::PipelineParams;
use crate::attractor::{analyze_complement, attractor_approx, check_trap, AttractorOptions, ComplementReport, Margin};
use crate::cover::{AnnulusPoint, CoverPoint};
use crate::entropy::{bracket, EntropyBracket};
use crate::error::{Error, Result};
use crate::grid::{GridSet, GridSummary};
use crate::horseshoe::{classify_joining, search_horseshoe, vertical_wall, SearchOutcome};
use crate::maps::LiftedMap;
use crate::rotation::{
    find_periodic, lattice_seeds, rotation_interval, PeriodicOrbitWitness, RotationInterval, RotationOptions,
    Stability,
};
use crate::scalar::Scalar;

/// One pass/fail clause of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Clause {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub params: PipelineParams,
    pub stage_labels: Vec<String>,
    pub budget: Vec<StageAudit>,
    pub f1: F1Check,
    pub f2: F2Check,
    pub f: FinalCheck,
    pub trap: bool,
    pub attractor: GridSummary,
    pub complement: ComplementReport,
    pub rotation: RotationInterval,
    pub witnesses: Vec<Option<PeriodicOrbitWitness>>,
    pub entropy: EntropyBracket,
    pub horseshoe: Option<SearchOutcome>,
    pub clauses: Vec<Clause>,
    pub pass: bool,
}

/// Report plus the attractor cover, kept for figures.
pub struct PipelineRun {
    pub report: PipelineReport,
    pub attractor: GridSet,
}

fn attractor_options(p: &PipelineParams) -> AttractorOptions {
    AttractorOptions {
        max_depth: p.depth,
        ..AttractorOptions::default()
    }
}

fn rotation_options(p: &PipelineParams) -> RotationOptions {
    RotationOptions {
        seed: p.seed,
        ..RotationOptions::default()
    }
}

fn endpoint_witness<S: Scalar>(f: &LiftedMap<S>, shift: i64, height: f64, tol: f64) -> Option<PeriodicOrbitWitness> {
    let seeds = lattice_seeds::<S>(32, 3, height - 0.01, height + 0.01);
    find_periodic(f, shift, 1, &seeds, tol).map(|w| PeriodicOrbitWitness {
        point: w.point.cast(),
        period: w.period,
        shift: w.shift,
        residual: w.residual,
        stability: w.stability,
        multipliers: w.multipliers,
    })
}

fn horseshoe_search<S: Scalar>(f: &LiftedMap<S>, p: &PipelineParams) -> Result<SearchOutcome> {
    let a = GridSet::horizontal_band(p.band()?, p.horseshoe_depth, p.trap.0 + 0.25, p.trap.1 - 0.25)?;
    let (w0, w1) = p.horseshoe_walls;
    let walls: Vec<_> = [(w0, w1), (w1, w0)]
        .iter()
        .filter_map(|&(a0, a1)| Some((classify_joining(&vertical_wall(&a, a0), &a)?, classify_joining(&vertical_wall(&a, a1), &a)?)))
        .collect();
    Ok(search_horseshoe(f, &walls, &a, p.n_max, 1, Margin::default()))
}

/// Builds `f1`, `f2` and `f`, checks each stage, and validates the clauses on `f`.
pub fn run_pipeline<S: Scalar>(p: &PipelineParams) -> Result<PipelineRun> {
    p.validate()?;
    let f1 = build_f1::<S>(p)?;
    let f2 = build_f2(&f1.map, p)?;
    let fin = build_final(&f2.map, p)?;
    let f = &fin.map;
    let f1_check = verify_f1(&f1.map, p)?;
    let f2_check = verify_f2(&f2.map, &f1.map, p)?;
    let final_check = verify_final(f, &f2.map, p)?;

    let trap_region = p.trap_region()?;
    let trap = check_trap(f, &trap_region, Margin::default());
    if !trap {
        return Err(Error::VerificationFailed {
            stage: "trap".into(),
            detail: "f does not map the trap band into its interior".into(),
        });
    }
    let cover = attractor_approx(f, &trap_region, &attractor_options(p))?;
    let complement = analyze_complement(&cover).report();
    let rotation = rotation_interval(f, &cover, p.rotation_orbit, p.rotation_samples, &rotation_options(p))?;
    let witnesses = vec![
        endpoint_witness(f, 0, 0.0, p.witness_tol),
        endpoint_witness(f, 1, 1.0, p.witness_tol),
    ];
    let region = cover.at_depth(p.entropy_depth)?;
    let entropy = bracket(f, &region, None, p.entropy_n)?;
    let horseshoe = if p.n_max > 0 { Some(horseshoe_search(f, p)?) } else { None };

    let (d, eps) = (p.delta_margin, p.epsilon_target);
    let clauses = vec![
        Clause::new("trap", trap, format!("f maps S^1 x [{}, {}] into its interior", p.trap.0, p.trap.1)),
        Clause::new(
            "essential",
            complement.essential && cover.depth() >= 8.min(p.depth),
            format!("attractor cover at depth {}, {} boxes", cover.depth(), cover.len()),
        ),
        Clause::new(
            "rotation",
            rotation.contains_interval(d, 1.0 - d),
            format!("[{:.4}, {:.4}] vs [{d}, {}]", rotation.rho_min, rotation.rho_max, 1.0 - d),
        ),
        Clause::new(
            "endpoints",
            witnesses.iter().all(|w| w.as_ref().is_some_and(|w| w.residual < p.witness_tol)),
            format!(
                "0/1 and 1/1 residuals {:?}",
                witnesses.iter().map(|w| w.as_ref().map(|w| w.residual)).collect::<Vec<_>>()
            ),
        ),
        Clause::new(
            "entropy",
            entropy.upper < eps,
            format!("upper bound {:.5} at n = {} vs {eps}", entropy.upper, entropy.n_used),
        ),
    ];
    let pass = clauses.iter().all(|c| c.pass);
    Ok(PipelineRun {
        report: PipelineReport {
            params: p.clone(),
            stage_labels: vec![f1.map.label().into(), f2.map.label().into(), f.label().into()],
            budget: vec![f1.audit, f2.audit, fin.audit.clone()],
            f1: f1_check,
            f2: f2_check,
            f: final_check,
            trap,
            attractor: cover.summary(),
            complement,
            rotation,
            witnesses,
            entropy,
            horseshoe,
            clauses,
            pass,
        },
        attractor: cover,
    })
}

/// A periodic orbit found in the dissipative variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSummary {
    pub p: i64,
    pub q: usize,
    pub point: AnnulusPoint<f64>,
    pub residual: f64,
    pub stability: Stability,
}

/// Forward iterates of a short unstable arc of a saddle, at the cover's resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableSetReport {
    pub saddle: PeriodicSummary,
    pub cells: GridSummary,
    pub inside_attractor_cover: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeReport {
    pub n: u32,
    pub check: DissipativeCheck,
    pub attractor: GridSummary,
    pub complement: ComplementReport,
    pub rotation: RotationInterval,
    pub periodic: Vec<PeriodicSummary>,
    pub unstable_set: Option<UnstableSetReport>,
    pub clauses: Vec<Clause>,
    pub pass: bool,
}

pub struct DissipativeRun {
    pub report: DissipativeReport,
    pub attractor: GridSet,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Distinct periodic orbits of type `p/q` reached from a seed lattice.
fn periodic_orbits<S: Scalar>(g: &LiftedMap<S>, p: i64, q: usize) -> Vec<PeriodicSummary> {
    let mut found: Vec<PeriodicSummary> = Vec::new();
    for seed in lattice_seeds::<S>(16, 12, 0.04, 0.96) {
        let Some(w) = find_periodic(g, p, q, &[seed], 1e-9) else {
            continue;
        };
        let pt = w.point.cast::<f64>();
        let dup = found.iter().any(|o| {
            // any point of the orbit counts as the same orbit
            let mut z = CoverPoint::new(S::lit(o.point.x), S::lit(o.point.y));
            (0..q).any(|_| {
                let zf = z.cast::<f64>();
                let same = crate::cover::circle_dist(zf.x, pt.x) < 1e-6 && (zf.y - pt.y).abs() < 1e-6;
                z = g.eval(z);
                same
            })
        });
        if !dup {
            found.push(PeriodicSummary {
                p,
                q,
                point: pt,
                residual: w.residual,
                stability: w.stability,
            });
        }
    }
    found
}

fn unstable_set<S: Scalar>(g: &LiftedMap<S>, saddle: &PeriodicSummary, cover: &GridSet, steps: usize) -> Option<UnstableSetReport> {
    let gq = g.power(saddle.q);
    let z = CoverPoint::new(S::lit(saddle.point.x), S::lit(saddle.point.y));
    let j = gq.jacobian(z).cast::<f64>();
    let (_, lam) = j.real_eigenvalues()?;
    // eigenvector of the expanding multiplier
    let (vx, vy) = if j.b.abs() > j.c.abs() { (j.b, lam - j.a) } else { (lam - j.d, j.c) };
    let norm = vx.hypot(vy);
    if norm == 0.0 {
        return None;
    }
    let (vx, vy) = (vx / norm, vy / norm);
    let mut cells = cover.like();
    let arc = 1e-5;
    for side in [-1.0, 1.0] {
        for k in 0..200 {
            let t = side * arc * (1.0 + (lam.abs() - 1.0) * k as f64 / 200.0);
            let mut q = CoverPoint::new(S::lit(saddle.point.x + t * vx), S::lit(saddle.point.y + t * vy));
            for _ in 0..steps {
                q = g.eval(q);
                let qf = q.cast::<f64>();
                match cells.locate(qf.x, qf.y) {
                    Some((i, jj)) => cells.insert(i, jj),
                    None => break,
                }
            }
        }
    }
    Some(UnstableSetReport {
        saddle: saddle.clone(),
        inside_attractor_cover: cells.is_subset(cover),
        cells: cells.summary(),
        note: "forward iterates of a short unstable arc; equality with the attractor is not asserted".into(),
    })
}

/// Builds `g_n = h_n o f2` for the variant's connector and validates its clauses.
pub fn run_dissipative<S: Scalar>(p: &PipelineParams) -> Result<DissipativeRun> {
    p.validate()?;
    let d = &p.dissipative;
    let f1 = build_f1::<S>(p)?;
    let f2 = build_dissipative_connector(&f1.map, p)?;
    let g = build_dissipative(&f2, d.n)?;
    let check = verify_dissipative(&g, d.n, p)?;
    let trap_region = p.trap_region()?;
    if !check_trap(&g, &trap_region, Margin::default()) {
        return Err(Error::VerificationFailed {
            stage: "trap".into(),
            detail: format!("g{} does not map the trap band into its interior", d.n),
        });
    }
    let cover = attractor_approx(&g, &trap_region, &attractor_options(p))?;
    let complement = analyze_complement(&cover).report();
    let rotation = rotation_interval(&g, &cover, d.rotation_orbit, d.rotation_samples, &rotation_options(p))?;
    let mut periodic = Vec::new();
    for q in 1..=d.max_period.max(1) {
        for pp in 0..=q as i64 {
            if gcd(pp, q as i64) == 1 {
                periodic.extend(periodic_orbits(&g, pp, q));
            }
        }
    }
    let unstable = periodic
        .iter()
        .find(|o| o.stability == Stability::Saddle && o.point.y > 0.02 && o.point.y < 0.98)
        .and_then(|s| unstable_set(&g, s, &cover, d.unstable_steps));
    let dm = d.delta_margin;
    let clauses = vec![
        Clause::new(
            "determinant",
            check.max_det < check.det_bound,
            format!("max det {:.6} vs {:.6}", check.max_det, check.det_bound),
        ),
        Clause::new("twist", check.min_twist > 0.0, format!("min dX/dy {:.4}", check.min_twist)),
        Clause::new("trap", check.trap, "S^1 x [-1, 2] into its interior".into()),
        Clause::new(
            "rotation",
            rotation.contains_interval(dm, 1.0 - dm),
            format!("[{:.4}, {:.4}] vs [{dm}, {}]", rotation.rho_min, rotation.rho_max, 1.0 - dm),
        ),
    ];
    let pass = clauses.iter().all(|c| c.pass);
    Ok(DissipativeRun {
        report: DissipativeReport {
            n: d.n,
            check,
            attractor: cover.summary(),
            complement,
            rotation,
            periodic,
            unstable_set: unstable,
            clauses,
            pass,
        },
        attractor: cover,
    })
}

/// One budget of the tradeoff sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c1_budget: f64,
    pub entropy_upper: f64,
    pub rotation_length: f64,
    pub stabilization_gap: f64,
}

/// Entropy upper bound and rotation-interval length of `f` across budgets.
pub fn budget_sweep<S: Scalar>(p: &PipelineParams, budgets: &[f64]) -> Result<Vec<SweepPoint>> {
    budgets
        .iter()
        .map(|&b| {
            let mut q = p.clone();
            q.c1_budget = b;
            let f1 = build_f1::<S>(&q)?;
            let f2 = build_f2(&f1.map, &q)?;
            let f = build_final(&f2.map, &q)?.map;
            let trap = q.trap_region()?;
            let cover = attractor_approx(&f, &trap, &attractor_options(&q))?;
            let rot = rotation_interval(&f, &cover, q.rotation_orbit, q.rotation_samples, &rotation_options(&q))?;
            let e = bracket(&f, &cover.at_depth(q.entropy_depth)?, None, q.entropy_n)?;
            Ok(SweepPoint {
                c1_budget: b,
                entropy_upper: e.upper,
                rotation_length: rot.length(),
                stabilization_gap: rot.stabilization_gap,
            })
        })
        .collect()
}
