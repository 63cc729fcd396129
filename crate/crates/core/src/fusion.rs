//! Minimum-risk fusion of candidate masks into a base prediction.
//!
//! Candidates are kept only when confident (`score >= alpha`) and small
//! (`area <= beta`). Each survivor takes the most frequent base label under
//! it, computed on the untouched prediction. Survivors are then written
//! largest first, so smaller entities win contested pixels.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{AnchorFailure, BackendError, CandidateMask, Segmenter, SegmenterRequest};
use crate::entropy::{
    compute_entropy, region_filter, sample_anchors, Anchor, FilterError, FilterParams,
};
use crate::tensor::{BinaryMask, ClassMap, ProbabilityMap};

pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_BETA: usize = 20_000;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("alpha {0} must lie in [0, 1]")]
    InvalidAlpha(f64),
    #[error("beta must be at least 1 pixel")]
    InvalidBeta,
    #[error("mask is empty; no intersection to take a mode of")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("prediction label {label} at pixel {pixel} is not below the class count {classes}")]
    LabelOutOfRange {
        label: u8,
        pixel: usize,
        classes: usize,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Score/area thresholds and the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub alpha: f64,
    pub beta: usize,
    pub enhance: bool,
    pub use_filter: bool,
    pub use_sort: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            enhance: true,
            use_filter: true,
            use_sort: true,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FusionError::InvalidAlpha(self.alpha));
        }
        if self.beta < 1 {
            return Err(FusionError::InvalidBeta);
        }
        Ok(())
    }
}

/// A candidate that survived filtering, labelled with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassedMask {
    pub mask: BinaryMask,
    pub cls: u8,
    pub area: usize,
    pub anchor_index: usize,
}

/// Keeps masks with `score >= alpha` and `area <= beta`, in input order.
pub fn filter_masks(masks: Vec<CandidateMask>, alpha: f64, beta: usize) -> Vec<CandidateMask> {
    masks
        .into_iter()
        .filter(|m| m.score() >= alpha && m.area() <= beta)
        .collect()
}

/// Most frequent label of `y` under `mask`; ties go to the smallest id.
pub fn assign_class(mask: &BinaryMask, y: &ClassMap) -> Result<u8, FusionError> {
    if !mask.same_shape(y.height(), y.width()) {
        return Err(FusionError::Shape(format!(
            "mask {}x{} vs prediction {}x{}",
            mask.height(),
            mask.width(),
            y.height(),
            y.width()
        )));
    }
    let mut hist = [0usize; 256];
    for i in mask.set_indices() {
        hist[y.labels()[i] as usize] += 1;
    }
    let mut best = 0usize;
    for (label, &count) in hist.iter().enumerate() {
        if count > hist[best] {
            best = label;
        }
    }
    if hist[best] == 0 {
        return Err(FusionError::EmptyMask);
    }
    Ok(best as u8)
}

/// Stable sort by area, largest first.
pub fn sort_masks(mut masks: Vec<ClassedMask>) -> Vec<ClassedMask> {
    masks.sort_by_key(|m| std::cmp::Reverse(m.area));
    masks
}

/// Writes each mask's class over its pixels, first to last.
pub fn overwrite(y: &ClassMap, ordered: &[ClassedMask]) -> Result<ClassMap, FusionError> {
    let mut out = y.clone();
    for m in ordered {
        if !m.mask.same_shape(y.height(), y.width()) {
            return Err(FusionError::Shape(format!(
                "mask from anchor {} is {}x{}, prediction is {}x{}",
                m.anchor_index,
                m.mask.height(),
                m.mask.width(),
                y.height(),
                y.width()
            )));
        }
        let labels = out.labels_mut();
        for i in m.mask.set_indices() {
            labels[i] = m.cls;
        }
    }
    Ok(out)
}

/// Everything `refine` produced along the way.
#[derive(Debug)]
pub struct Refinement {
    pub prediction: ClassMap,
    pub anchors: Vec<Anchor>,
    pub candidates: usize,
    /// Masks in the order they were written.
    pub applied: Vec<ClassedMask>,
    pub dropped_empty: usize,
    pub failures: Vec<AnchorFailure>,
}

impl Refinement {
    fn unchanged(y: &ClassMap) -> Self {
        Self {
            prediction: y.clone(),
            anchors: Vec::new(),
            candidates: 0,
            applied: Vec::new(),
            dropped_empty: 0,
            failures: Vec::new(),
        }
    }
}

/// The full enhancement pass: entropy, region filter, anchors, segmenter,
/// filtering, class assignment, ordering and overwrite.
#[allow(clippy::too_many_arguments)]
pub fn refine<S: Segmenter + ?Sized>(
    y: &ClassMap,
    p: &ProbabilityMap,
    filter: FilterParams,
    fusion: FusionParams,
    k: usize,
    seed: u64,
    backend: &S,
    image_id: &str,
) -> Result<Refinement, FusionError> {
    filter.validate()?;
    fusion.validate()?;
    if !y.same_shape(p.height(), p.width()) {
        return Err(FusionError::Shape(format!(
            "prediction {}x{} vs probabilities {}x{}",
            y.height(),
            y.width(),
            p.height(),
            p.width()
        )));
    }
    if let Some((pixel, &label)) = y
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= p.num_classes())
    {
        return Err(FusionError::LabelOutOfRange {
            label,
            pixel,
            classes: p.num_classes(),
        });
    }
    if !fusion.enhance {
        return Ok(Refinement::unchanged(y));
    }

    let entropy = compute_entropy(p);
    let region = region_filter(&entropy, filter)?;
    let anchors = sample_anchors(&region, k, seed);
    if anchors.is_empty() {
        return Ok(Refinement::unchanged(y));
    }
    let request = SegmenterRequest::new(image_id, y.height(), y.width(), anchors);
    let outcome = backend.segment(&request)?;
    for f in &outcome.failures {
        warn!("segmenter failed for anchors {:?}: {}", f.anchors, f.error);
    }
    for m in &outcome.masks {
        if !m.mask().same_shape(y.height(), y.width()) {
            return Err(FusionError::Shape(format!(
                "backend mask for anchor {} is {}x{}",
                m.anchor_index(),
                m.mask().height(),
                m.mask().width()
            )));
        }
    }
    let candidates = outcome.masks.len();

    let kept = if fusion.use_filter {
        filter_masks(outcome.masks, fusion.alpha, fusion.beta)
    } else {
        outcome.masks
    };
    let (kept, empty): (Vec<_>, Vec<_>) = kept.into_iter().partition(|m| m.area() > 0);
    if !empty.is_empty() {
        warn!("dropping {} empty candidate masks", empty.len());
    }

    // classes come from the pristine prediction, so masks are independent
    let classed: Vec<ClassedMask> = kept
        .into_par_iter()
        .map(|m| {
            let cls = assign_class(m.mask(), y)?;
            let (area, anchor_index) = (m.area(), m.anchor_index());
            Ok(ClassedMask {
                mask: m.into_mask(),
                cls,
                area,
                anchor_index,
            })
        })
        .collect::<Result<_, FusionError>>()?;
    let ordered = if fusion.use_sort {
        sort_masks(classed)
    } else {
        classed
    };
    let prediction = overwrite(y, &ordered)?;
    Ok(Refinement {
        prediction,
        anchors: request.anchors,
        candidates,
        applied: ordered,
        dropped_empty: empty.len(),
        failures: outcome.failures,
    })
}
