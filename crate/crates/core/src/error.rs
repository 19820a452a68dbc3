use thiserror::Error;

use crate::grid::GridSet;

/// Failure signals raised by the kernels and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("orbit left the band [{y_min}, {y_max}] at step {step} (y = {y})")]
    OrbitEscape {
        step: usize,
        y: f64,
        y_min: f64,
        y_max: f64,
    },

    #[error("coordinate overflow at step {step}: |coordinate| exceeds 1e12")]
    Overflow { step: usize },

    #[error("image of box ({i}, {j}) leaves the band (y range [{lo}, {hi}])")]
    ImageLeftBand { i: u32, j: u32, lo: f64, hi: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("box budget exceeded at depth {depth}: {boxes} boxes > cap {cap}")]
    BudgetExceeded {
        depth: u8,
        boxes: usize,
        cap: usize,
        partial: Box<GridSet>,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("inconsistent entropy bracket: lower {lower} > upper {upper}")]
    Inconsistent { lower: f64, upper: f64 },

    #[error("verification failed in {stage}: {detail}")]
    VerificationFailed { stage: String, detail: String },

    #[error("inverse did not converge at ({x}, {y})")]
    NoConvergence { x: f64, y: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
