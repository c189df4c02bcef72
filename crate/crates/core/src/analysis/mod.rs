//! Learning-curve fitting, difficulty classification and region
//! decomposition of scores across checkpoints.

mod fit;
mod region;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ScoreError;

pub use fit::{
    fit_saturation, fit_ushape, fu, SaturationFit, UShapeFit, DEFAULT_WARRANT_MARGIN,
    WARRANT_ABS_FLOOR,
};
pub use region::{char_offset_to_token, region_decomposition, RegionDelta};
pub use stats::{
    classify_paradigm, label, pearson, Difficulty, ParadigmClass, EASY_THRESHOLD,
    MEDIUM_THRESHOLD, SCALING_RHO_THRESHOLD,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} distinct tokens_seen values, got {distinct}")]
    InsufficientPoints { needed: usize, distinct: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
    #[error("pair {pair} ({side}): split {split} outside 1..={len}")]
    SplitOutOfRange {
        pair: usize,
        side: &'static str,
        split: usize,
        len: usize,
    },
    #[error("pair {pair} ({side}): {reason}")]
    Misaligned {
        pair: usize,
        side: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// One checkpoint observation: accuracy after `tokens_seen` training tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    #[serde(default)]
    pub paradigm_id: String,
    #[serde(default)]
    pub model_params: u64,
    #[serde(default)]
    pub seed_id: String,
    pub tokens_seen: u64,
    pub accuracy: f64,
}

impl TrajectoryPoint {
    pub fn new(tokens_seen: u64, accuracy: f64) -> Self {
        TrajectoryPoint {
            paradigm_id: String::new(),
            model_params: 0,
            seed_id: String::new(),
            tokens_seen,
            accuracy,
        }
    }
}
