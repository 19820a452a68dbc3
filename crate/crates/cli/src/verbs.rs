//! One function per verb. Each returns the JSON result, an optional SVG figure and a pass flag.

use anyhow::{bail, Context, Result};
use rotolab_core::attractor::{analyze_complement, attractor_levels, AttractorOptions, Margin};
use rotolab_core::entropy::{bracket, separated_set_estimate, SeparatedOptions};
use rotolab_core::horseshoe::{
    adapted_rectangle, chain_reachable, classify_joining, desk_check, itinerary_bound_check, robustness_probe,
    search_horseshoe, vertical_wall, ChainOptions, JoiningContinuum, SearchOutcome,
};
use rotolab_core::maps::MapSpec;
use rotolab_core::rotation::{rotation_interval, RotationOptions};
use rotolab_core::theorem_b::{budget_sweep, run_dissipative, run_pipeline};
use rotolab_core::{AnnulusPoint, Band, GridSet, LiftedMap, Scalar};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Variant};

/// Settings after merging verb defaults, the config file and flags.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub map: MapSpec,
    pub band: (f64, f64),
    pub domain: (f64, f64),
    pub depth: u8,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
}

pub struct Outcome {
    pub result: Value,
    pub svg: Option<String>,
    pub pass: bool,
}

impl Outcome {
    fn ok(result: Value, svg: Option<String>) -> Self {
        Self { result, svg, pass: true }
    }
}

impl Settings {
    fn band(&self) -> Result<Band<f64>> {
        Ok(Band::new(self.domain.0, self.domain.1)?)
    }

    fn region(&self) -> Result<GridSet> {
        let (y0, y1) = self.band;
        if !(self.domain.0 <= y0 && y1 <= self.domain.1) {
            bail!("band [{y0}, {y1}] must lie inside the domain [{}, {}]", self.domain.0, self.domain.1);
        }
        Ok(GridSet::horizontal_band(self.band()?, self.depth, y0, y1)?)
    }
}

fn walls(a: &GridSet, w: (f64, f64)) -> Vec<(JoiningContinuum, JoiningContinuum)> {
    [(w.0, w.1), (w.1, w.0)]
        .iter()
        .filter_map(|&(x0, x1)| Some((classify_joining(&vertical_wall(a, x0), a)?, classify_joining(&vertical_wall(a, x1), a)?)))
        .collect()
}

pub fn rotation<S: Scalar>(s: &Settings, _c: &RunConfig) -> Result<Outcome> {
    let f: LiftedMap<S> = s.map.build()?;
    let k = s.region()?;
    let opts = RotationOptions {
        seed: s.seed,
        corners: true,
        ..RotationOptions::default()
    };
    let interval = rotation_interval(&f, &k, s.n, s.samples, &opts)?;
    let svg = k.to_svg(&format!("rotation sample set for {}", f.label()));
    Ok(Outcome::ok(
        json!({ "map": f.label(), "region": k.summary(), "interval": interval }),
        Some(svg),
    ))
}

pub fn attractor<S: Scalar>(s: &Settings, c: &RunConfig) -> Result<Outcome> {
    let f: LiftedMap<S> = s.map.build()?;
    let sec = &c.attractor;
    if sec.base_depth > s.depth {
        bail!("attractor.base_depth {} exceeds depth {}", sec.base_depth, s.depth);
    }
    let trap = GridSet::horizontal_band(s.band()?, sec.base_depth, s.band.0, s.band.1)?;
    let opts = AttractorOptions {
        max_depth: s.depth,
        box_cap: sec.box_cap,
        margin: Margin::Lipschitz {
            factor: sec.margin_factor,
        },
        ..AttractorOptions::default()
    };
    let levels = attractor_levels(&f, &trap, &opts)?;
    let cover = levels.last().context("no attractor level")?;
    let complement = analyze_complement(cover).report();
    let svg = cover.to_svg(&format!("attractor cover of {} at depth {}", f.label(), cover.depth()));
    Ok(Outcome::ok(
        json!({
            "map": f.label(),
            "trap": trap.summary(),
            "levels": levels.iter().map(GridSet::summary).collect::<Vec<_>>(),
            "cover": cover.summary(),
            "complement": complement,
        }),
        Some(svg),
    ))
}

pub fn entropy<S: Scalar>(s: &Settings, c: &RunConfig) -> Result<Outcome> {
    let f: LiftedMap<S> = s.map.build()?;
    let region = s.region()?;
    let sec = &c.entropy;
    let mut search = None;
    let lower = if sec.certify {
        let h = &c.horseshoe;
        let out = search_horseshoe(&f, &walls(&region, h.walls), &region, h.n_max, h.j_max, Margin::default());
        let lower = match &out {
            SearchOutcome::Found { certificate, .. } => Some((
                certificate.entropy_lower,
                format!("markov crossing n0 = {}, m = {}", certificate.n0, certificate.m),
            )),
            SearchOutcome::NotFound { .. } => None,
        };
        search = Some(out);
        lower
    } else {
        None
    };
    let mut b = bracket(&f, &region, lower, s.n)?;
    if !sec.separated_n.is_empty() && !sec.separated_eps.is_empty() {
        let opts = SeparatedOptions {
            cloud: sec.cloud,
            seed: s.seed,
        };
        b.estimator_table = Some(separated_set_estimate(&f, &region, &sec.separated_n, &sec.separated_eps, &opts)?);
    }
    let svg = region.to_svg(&format!("entropy region for {}", f.label()));
    Ok(Outcome::ok(json!({ "map": f.label(), "bracket": b, "horseshoe": search }), Some(svg)))
}

pub fn horseshoe<S: Scalar>(s: &Settings, c: &RunConfig) -> Result<Outcome> {
    let f: LiftedMap<S> = s.map.build()?;
    let a = s.region()?;
    let h = &c.horseshoe;
    let pairs = walls(&a, h.walls);
    let outcome = search_horseshoe(&f, &pairs, &a, h.n_max, h.j_max, Margin::default());
    let mut result = json!({ "map": f.label(), "region": a.summary(), "outcome": outcome });
    let mut svg = None;
    if let SearchOutcome::Found { certificate, wall_pair } = &outcome {
        let (d0, d1) = &pairs[*wall_pair];
        let r = adapted_rectangle(d0, d1, &a)?.context("rectangle vanished between search and check")?;
        result["desk_check"] = serde_json::to_value(desk_check(&f, certificate, &r, h.desk_samples, s.seed))?;
        result["itinerary_check"] =
            serde_json::to_value(itinerary_bound_check(&f, certificate, &r, h.itinerary_length, h.itineraries, s.seed))?;
        if h.robustness {
            let rep = robustness_probe(&f, &r, certificate.n0, certificate.j, Margin::default(), h.eta_max, h.eta_tol);
            result["robustness"] = serde_json::to_value(rep)?;
        }
        svg = Some(r.cells.to_svg(&format!("adapted rectangle for {}", f.label())));
    }
    Ok(Outcome::ok(result, svg))
}

pub fn chains<S: Scalar>(s: &Settings, c: &RunConfig) -> Result<Outcome> {
    let f: LiftedMap<S> = s.map.build()?;
    let k = s.region()?;
    let sec = &c.chains;
    let (y0, y1) = s.band;
    let from = sec.from.unwrap_or((0.25, y0 + 0.1 * (y1 - y0)));
    let to = sec.to.unwrap_or((0.75, y1 - 0.1 * (y1 - y0)));
    let eps = sec.eps.unwrap_or(1.5 * k.box_diagonal());
    let opts = ChainOptions {
        horizon: sec.horizon.unwrap_or(s.n),
        ..ChainOptions::default()
    };
    let reachable = chain_reachable(&f, AnnulusPoint::new(from.0, from.1), AnnulusPoint::new(to.0, to.1), &k, eps, &opts)?;
    let svg = k.to_svg(&format!("jump set for {}", f.label()));
    Ok(Outcome::ok(
        json!({
            "map": f.label(),
            "from": from,
            "to": to,
            "eps": eps,
            "horizon": opts.horizon,
            "jump_set": k.summary(),
            "reachable": reachable,
        }),
        Some(svg),
    ))
}

pub fn pipeline<S: Scalar>(c: &RunConfig, depth: Option<u8>, seed: Option<u64>, variant: Option<Variant>) -> Result<Outcome> {
    let sec = &c.pipeline;
    let mut p = sec.params.clone();
    if let Some(d) = depth {
        p.depth = d;
    }
    if let Some(s) = seed {
        p.seed = s;
    }
    match variant.unwrap_or(sec.variant) {
        Variant::TheoremB => {
            let run = run_pipeline::<S>(&p)?;
            let sweep = if sec.sweep.is_empty() { None } else { Some(budget_sweep::<S>(&p, &sec.sweep)?) };
            let svg = run.attractor.to_svg("attractor cover of f");
            Ok(Outcome {
                pass: run.report.pass,
                result: json!({ "variant": "theorem_b", "report": run.report, "sweep": sweep }),
                svg: Some(svg),
            })
        }
        Variant::Dissipative => {
            let run = run_dissipative::<S>(&p)?;
            let svg = run.attractor.to_svg(&format!("attractor cover of g{}", run.report.n));
            Ok(Outcome {
                pass: run.report.pass,
                result: json!({ "variant": "dissipative", "report": run.report }),
                svg: Some(svg),
            })
        }
    }
}
