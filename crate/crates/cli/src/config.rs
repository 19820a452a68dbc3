//! TOML run configuration. Every key is optional; flags override the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rotolab_core::maps::MapSpec;
use rotolab_core::theorem_b::PipelineParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Verb the file was written for; checked against the command line.
    pub command: Option<String>,
    pub map: Option<MapSpec>,
    /// Region of interest `[y0, y1]`: sample set, trap or chain set depending on the verb.
    pub band: Option<(f64, f64)>,
    /// Band carrying the grid. Defaults to `band` widened by half its height on both sides.
    pub domain: Option<(f64, f64)>,
    pub depth: Option<u8>,
    pub n: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    #[serde(default)]
    pub attractor: AttractorSection,
    #[serde(default)]
    pub entropy: EntropySection,
    #[serde(default)]
    pub horseshoe: HorseshoeSection,
    #[serde(default)]
    pub chains: ChainsSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorSection {
    pub base_depth: u8,
    /// Factor on the Lipschitz dilation of box images.
    pub margin_factor: f64,
    pub box_cap: usize,
}

impl Default for AttractorSection {
    fn default() -> Self {
        Self {
            base_depth: 4,
            margin_factor: 1.0,
            box_cap: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySection {
    /// Search for a horseshoe certificate and use it as the lower bound.
    pub certify: bool,
    pub separated_n: Vec<usize>,
    pub separated_eps: Vec<f64>,
    pub cloud: usize,
}

impl Default for EntropySection {
    fn default() -> Self {
        Self {
            certify: false,
            separated_n: Vec::new(),
            separated_eps: Vec::new(),
            cloud: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorseshoeSection {
    /// Abscissas of the two vertical walls.
    pub walls: (f64, f64),
    pub n_max: usize,
    pub j_max: i64,
    pub desk_samples: usize,
    pub itinerary_length: usize,
    pub itineraries: usize,
    pub robustness: bool,
    pub eta_max: f64,
    pub eta_tol: f64,
}

impl Default for HorseshoeSection {
    fn default() -> Self {
        Self {
            walls: (0.2, 0.8),
            n_max: 4,
            j_max: 1,
            desk_samples: 1000,
            itinerary_length: 10,
            itineraries: 1000,
            robustness: false,
            eta_max: 0.2,
            eta_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainsSection {
    pub from: Option<(f64, f64)>,
    pub to: Option<(f64, f64)>,
    /// Jump size; defaults to 1.5 box diagonals.
    pub eps: Option<f64>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    TheoremB,
    Dissipative,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub variant: Variant,
    /// C^1 budgets for an optional tradeoff sweep.
    pub sweep: Vec<f64>,
    pub params: PipelineParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}
