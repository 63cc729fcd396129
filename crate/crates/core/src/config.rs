//! Hyperparameters of one refinement pass.

use serde::{Deserialize, Serialize};

use crate::backend::Segmenter;
use crate::entropy::{FilterParams, DEFAULT_ANCHORS, DEFAULT_TAU, DEFAULT_WINDOW};
use crate::fusion::{refine, FusionError, FusionParams, Refinement, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::tensor::{ClassMap, ProbabilityMap};

/// Flat view of every refinement knob. Field names double as config-file keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub w: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta: usize,
    pub k: usize,
    pub seed: u64,
    pub enhance: bool,
    pub use_filter: bool,
    pub use_sort: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            w: DEFAULT_WINDOW,
            tau: DEFAULT_TAU,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            k: DEFAULT_ANCHORS,
            seed: 0,
            enhance: true,
            use_filter: true,
            use_sort: true,
        }
    }
}

impl RefineConfig {
    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            w: self.w,
            tau: self.tau,
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            alpha: self.alpha,
            beta: self.beta,
            enhance: self.enhance,
            use_filter: self.use_filter,
            use_sort: self.use_sort,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        self.filter_params().validate()?;
        self.fusion_params().validate()
    }

    pub fn refine<S: Segmenter + ?Sized>(
        &self,
        y: &ClassMap,
        p: &ProbabilityMap,
        backend: &S,
        image_id: &str,
    ) -> Result<Refinement, FusionError> {
        refine(
            y,
            p,
            self.filter_params(),
            self.fusion_params(),
            self.k,
            self.seed,
            backend,
            image_id,
        )
    }

    /// The four ablation rows: enhancement off, on without filter or sort,
    /// on with filter only, and everything on.
    pub fn ablation_grid(&self) -> Vec<(String, RefineConfig)> {
        let row = |enhance, use_filter, use_sort| RefineConfig {
            enhance,
            use_filter,
            use_sort,
            ..*self
        };
        vec![
            ("base".to_string(), row(false, false, false)),
            ("enhance".to_string(), row(true, false, false)),
            ("enhance+filter".to_string(), row(true, true, false)),
            ("enhance+filter+sort".to_string(), row(true, true, true)),
        ]
    }
}
