//! `rotolab`: rotation intervals, attractor covers, horseshoes, entropy brackets and chains
//! for annulus maps, plus the full construction pipeline.
//!
//! Exit status: 0 on success, 2 when a pipeline clause fails, 1 on any error.

mod config;
mod verbs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rotolab_core::maps::MapSpec;
use serde_json::json;

use config::{Precision, RunConfig, Variant};
use verbs::{Outcome, Settings};

#[derive(Parser, Debug)]
#[command(name = "rotolab", version, about = "Numerical laboratory for annulus maps")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Rotation interval of the orbits started in a horizontal band.
    Rotation(Common),
    /// Outer box cover of the attractor of a trap band.
    Attractor(Common),
    /// Markov crossing search for a rotational horseshoe between two vertical walls.
    Horseshoe {
        #[command(flatten)]
        common: Common,
        /// Wall abscissas.
        #[arg(long, num_args = 2, value_names = ["X0", "X1"])]
        walls: Option<Vec<f64>>,
        /// Largest translate gap to try.
        #[arg(long)]
        j_max: Option<i64>,
        /// Also bisect for the sup-norm robustness threshold.
        #[arg(long)]
        robustness: bool,
    },
    /// Entropy bracket: norm-growth upper bound, optional certified lower bound.
    Entropy {
        #[command(flatten)]
        common: Common,
        /// Search for a horseshoe certificate to use as the lower bound.
        #[arg(long)]
        certify: bool,
    },
    /// Epsilon-chain reachability with jumps restricted to a band.
    Chains {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        from: Option<Vec<f64>>,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        to: Option<Vec<f64>>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Build the staged maps and validate every clause; exits 2 if a clause fails.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON report path; metadata goes to `<out>.meta.json`. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG figure path.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Named map: twist, identity, horseshoe, f1, f2, theoremB, dissipative.
    #[arg(long)]
    map: Option<String>,
    /// Region of interest [Y0, Y1].
    #[arg(long, num_args = 2, value_names = ["Y0", "Y1"], allow_negative_numbers = true)]
    band: Option<Vec<f64>>,
    /// Grid band; defaults to the region widened by half its height on each side.
    #[arg(long, num_args = 2, value_names = ["Y0", "Y1"], allow_negative_numbers = true)]
    domain: Option<Vec<f64>>,
    /// Orbit length, iterate count or search depth, depending on the verb.
    #[arg(long)]
    n: Option<usize>,
    /// Grid depth: 2^depth boxes per row.
    #[arg(long)]
    depth: Option<u8>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
}

struct Defaults {
    map: &'static str,
    band: (f64, f64),
    depth: u8,
    n: usize,
}

impl Verb {
    fn name(&self) -> &'static str {
        match self {
            Verb::Rotation(_) => "rotation",
            Verb::Attractor(_) => "attractor",
            Verb::Horseshoe { .. } => "horseshoe",
            Verb::Entropy { .. } => "entropy",
            Verb::Chains { .. } => "chains",
            Verb::Pipeline { .. } => "pipeline",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Verb::Rotation(c) | Verb::Attractor(c) => c,
            Verb::Horseshoe { common, .. }
            | Verb::Entropy { common, .. }
            | Verb::Chains { common, .. }
            | Verb::Pipeline { common, .. } => common,
        }
    }

    fn defaults(&self) -> Defaults {
        let (map, band, depth, n) = match self {
            Verb::Rotation(_) => ("twist", (0.0, 1.0), 6, 1000),
            Verb::Attractor(_) => ("f1", (-1.0, 2.0), 7, 0),
            Verb::Horseshoe { .. } => ("horseshoe", (0.0, 1.0), 8, 0),
            Verb::Entropy { .. } => ("twist", (0.0, 1.0), 5, 1024),
            Verb::Chains { .. } => ("f2", (0.0, 1.0), 6, 1000),
            Verb::Pipeline { .. } => ("theoremB", (0.0, 1.0), 8, 0),
        };
        Defaults { map, band, depth, n }
    }
}

fn pair(v: &Option<Vec<f64>>) -> Option<(f64, f64)> {
    v.as_ref().map(|v| (v[0], v[1]))
}

fn settings(verb: &Verb, flags: &Common, cfg: &RunConfig) -> Result<Settings> {
    let d = verb.defaults();
    let map = match (&flags.map, &cfg.map) {
        (Some(name), _) => MapSpec::from_name(name)?,
        (None, Some(spec)) => spec.clone(),
        (None, None) => MapSpec::from_name(d.map)?,
    };
    let band = pair(&flags.band).or(cfg.band).unwrap_or(d.band);
    if !(band.0 < band.1) {
        bail!("band needs Y0 < Y1, got [{}, {}]", band.0, band.1);
    }
    let half = 0.5 * (band.1 - band.0);
    let domain = pair(&flags.domain).or(cfg.domain).unwrap_or((band.0 - half, band.1 + half));
    Ok(Settings {
        map,
        band,
        domain,
        depth: flags.depth.or(cfg.depth).unwrap_or(d.depth),
        n: flags.n.or(cfg.n).unwrap_or(d.n),
        samples: flags.samples.or(cfg.samples).unwrap_or(4096),
        seed: flags.seed.or(cfg.seed).unwrap_or(0x5eed),
    })
}

fn dispatch<S: rotolab_core::Scalar>(verb: &Verb, s: &Settings, cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    match verb {
        Verb::Rotation(_) => verbs::rotation::<S>(s, &cfg),
        Verb::Attractor(_) => verbs::attractor::<S>(s, &cfg),
        Verb::Horseshoe {
            walls, j_max, robustness, ..
        } => {
            if let Some(w) = pair(walls) {
                cfg.horseshoe.walls = w;
            }
            if let Some(j) = j_max {
                cfg.horseshoe.j_max = *j;
            }
            if let Some(n) = verb.common().n.or(cfg.n) {
                cfg.horseshoe.n_max = n;
            }
            cfg.horseshoe.robustness |= robustness;
            verbs::horseshoe::<S>(s, &cfg)
        }
        Verb::Entropy { certify, .. } => {
            cfg.entropy.certify |= certify;
            verbs::entropy::<S>(s, &cfg)
        }
        Verb::Chains { from, to, eps, .. } => {
            if let Some(p) = pair(from) {
                cfg.chains.from = Some(p);
            }
            if let Some(p) = pair(to) {
                cfg.chains.to = Some(p);
            }
            if eps.is_some() {
                cfg.chains.eps = *eps;
            }
            verbs::chains::<S>(s, &cfg)
        }
        Verb::Pipeline { common, variant } => verbs::pipeline::<S>(&cfg, common.depth, common.seed, *variant),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    let verb = &cli.verb;
    let flags = verb.common();
    let cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != verb.name() {
            bail!("config was written for `{c}`, not `{}`", verb.name());
        }
    }
    if let Verb::Pipeline { common, .. } = verb {
        if common.map.is_some() || common.band.is_some() || cfg.map.is_some() || cfg.band.is_some() {
            bail!("pipeline builds its own maps; set [pipeline.params] instead of map or band");
        }
    }
    let threads = flags.threads.or(cfg.threads);
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    let s = settings(verb, flags, &cfg)?;
    let precision = flags.precision.or(cfg.precision).unwrap_or_default();
    let outcome = match precision {
        Precision::F64 => dispatch::<f64>(verb, &s, &cfg)?,
        Precision::F32 => dispatch::<f32>(verb, &s, &cfg)?,
    };
    let settings_json = match verb {
        Verb::Pipeline { .. } => json!({ "precision": precision }),
        _ => json!({ "precision": precision, "resolved": s }),
    };
    let report = json!({
        "command": verb.name(),
        "settings": settings_json,
        "pass": outcome.pass,
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": verb.name(),
        "finished_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    match flags.out.as_ref().or(cfg.out.as_ref()) {
        Some(out) => {
            write(out, &text)?;
            let mut m = out.clone().into_os_string();
            m.push(".meta.json");
            write(Path::new(&m), &(serde_json::to_string_pretty(&meta)? + "\n"))?;
        }
        None => print!("{text}"),
    }
    if let Some(svg) = flags.svg.as_ref().or(cfg.svg.as_ref()) {
        match &outcome.svg {
            Some(fig) => write(svg, fig)?,
            None => eprintln!("warning: {} produced no figure; {} not written", verb.name(), svg.display()),
        }
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
