//! The low-entropy, large-rotation construction: staged maps, their checks, and the
//! end-to-end validation pipelines for the conservative and dissipative variants.

mod build;
mod pipeline;

pub use build::{
    build_dissipative, build_f1, build_f2, build_final, build_dissipative_connector, verify_dissipative, verify_f1,
    verify_f2, verify_final, Built, DissipativeCheck, F1Check, F2Check, FinalCheck, StageAudit, TransportProbe,
    BUMP_SHARE, CONNECTOR_SHARE, F1_SHARE,
};
pub use pipeline::{
    budget_sweep, run_dissipative, run_pipeline, Clause, DissipativeReport, DissipativeRun, PeriodicSummary,
    PipelineReport, PipelineRun, SweepPoint, UnstableSetReport,
};

use serde::{Deserialize, Serialize};

use crate::cover::Band;
use crate::error::{Error, Result};
use crate::grid::GridSet;

/// Marked points of the boundary circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryPoints {
    pub x0: f64,
    pub p0: f64,
    pub x1: f64,
    pub p1: f64,
}

impl Default for BoundaryPoints {
    fn default() -> Self {
        Self {
            x0: 0.0,
            p0: 0.5,
            x1: 0.5,
            p1: 0.0,
        }
    }
}

/// Parameters of the dissipative variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipativeParams {
    pub n: u32,
    /// Strip of the variant's own shear; its plateau should cover the band.
    pub strip: (f64, f64),
    pub edge: f64,
    pub amplitude: f64,
    pub delta_margin: f64,
    pub rotation_orbit: usize,
    pub rotation_samples: usize,
    /// Largest period searched for interior periodic orbits.
    pub max_period: usize,
    pub unstable_steps: usize,
}

impl Default for DissipativeParams {
    fn default() -> Self {
        Self {
            n: 16,
            strip: (-0.95, 1.95),
            edge: 0.45,
            amplitude: 0.5,
            delta_margin: 0.1,
            rotation_orbit: 2000,
            rotation_samples: 8192,
            max_period: 2,
            unstable_steps: 400,
        }
    }
}

/// Parameters of the construction and its validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    pub epsilon_target: f64,
    pub delta_margin: f64,
    /// Total C^1 distance to the twist allotted to the perturbation stages.
    pub c1_budget: f64,
    pub bump_radius: f64,
    /// Range `(r1, r2)` of the connector strip.
    pub strip_bounds: (f64, f64),
    pub strip_edge: f64,
    pub boundary: BoundaryPoints,
    pub collar: (f64, f64),
    pub exterior_strength: f64,
    pub exterior_width: f64,
    pub seed: u64,
    pub band: (f64, f64),
    pub trap: (f64, f64),
    pub base_depth: u8,
    pub depth: u8,
    pub rotation_orbit: usize,
    pub rotation_samples: usize,
    pub entropy_n: usize,
    pub entropy_depth: u8,
    pub witness_tol: f64,
    /// Largest power tried by the horseshoe search; 0 skips the search.
    pub n_max: usize,
    pub horseshoe_walls: (f64, f64),
    pub horseshoe_depth: u8,
    /// Horizon of the wandering-interval check.
    pub n_check: usize,
    pub chain_depth: u8,
    pub dissipative: DissipativeParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            epsilon_target: 0.1,
            delta_margin: 0.05,
            c1_budget: 0.05,
            bump_radius: 0.05,
            strip_bounds: (0.25, 0.75),
            strip_edge: 0.1,
            boundary: BoundaryPoints::default(),
            collar: (0.04, 0.12),
            exterior_strength: 0.25,
            exterior_width: 0.02,
            seed: 7,
            band: (-3.0, 4.0),
            trap: (-1.0, 2.0),
            base_depth: 4,
            depth: 8,
            rotation_orbit: 1000,
            rotation_samples: 4096,
            entropy_n: 1024,
            entropy_depth: 6,
            witness_tol: 1e-8,
            n_max: 64,
            horseshoe_walls: (0.0, 0.5),
            horseshoe_depth: 6,
            n_check: 10_000,
            chain_depth: 6,
            dissipative: DissipativeParams::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.delta_margin > 0.0 && self.delta_margin < 0.5) {
            return bad("delta_margin must lie in (0, 0.5)");
        }
        if !(self.epsilon_target > 0.0) || !(self.c1_budget > 0.0) {
            return bad("epsilon_target and c1_budget must be positive");
        }
        if !(self.band.0 < self.trap.0 && self.trap.0 < 0.0 && 1.0 < self.trap.1 && self.trap.1 < self.band.1) {
            return bad("need band.0 < trap.0 < 0 and 1 < trap.1 < band.1");
        }
        if self.base_depth > self.depth || self.entropy_depth > self.depth {
            return bad("base_depth and entropy_depth must not exceed depth");
        }
        if !(self.bump_radius > 0.0 && self.bump_radius < 0.25) {
            return bad("bump_radius must lie in (0, 0.25)");
        }
        if self.rotation_orbit == 0 || self.rotation_samples == 0 || self.entropy_n == 0 {
            return bad("orbit lengths and sample counts must be positive");
        }
        if !(self.dissipative.delta_margin > 0.0 && self.dissipative.delta_margin < 0.5) {
            return bad("dissipative.delta_margin must lie in (0, 0.5)");
        }
        Ok(())
    }

    pub fn band(&self) -> Result<Band<f64>> {
        Band::new(self.band.0, self.band.1)
    }

    /// Trap region at the base depth.
    pub fn trap_region(&self) -> Result<GridSet> {
        GridSet::horizontal_band(self.band()?, self.base_depth, self.trap.0, self.trap.1)
    }
}
