//! Promptable segmenter backends.
//!
//! A backend turns a batch of point prompts into candidate masks. Three
//! implementations ship here: [`ManifestBackend`] replays recorded masks,
//! [`MockOracle`] rasterizes a geometric scene, and [`HttpBackend`] speaks the
//! JSON wire protocol to a remote serving process.
//!
//! Failures scoped to some anchors never abort the batch: they are returned in
//! [`SegmentOutcome::failures`] next to whatever masks were produced.

mod http;
mod manifest;
mod mock;

use std::ops::Range;

use thiserror::Error;

use crate::entropy::Anchor;
use crate::tensor::{BinaryMask, FormatError};

pub use http::{
    HttpBackend, WireError, WireMask, WirePointResult, WireRequest, WireResponse, SEGMENT_PATH,
};
pub use manifest::{write_manifest, Manifest, ManifestBackend, ManifestEntry};
pub use mock::{DecoyRule, Entity, MockOracle, SceneSpec, Shape};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("anchors {batch:?}: connection failed: {message}")]
    Connection {
        batch: Range<usize>,
        message: String,
    },
    #[error("anchors {batch:?}: server returned status {status}: {body}")]
    Status {
        batch: Range<usize>,
        status: u16,
        body: String,
    },
    #[error("anchors {batch:?}: protocol error: {message}")]
    Protocol {
        batch: Range<usize>,
        message: String,
    },
}

/// A mask proposed for one anchor, with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMask {
    mask: BinaryMask,
    score: f64,
    anchor_index: usize,
    area: usize,
}

impl CandidateMask {
    pub fn new(mask: BinaryMask, score: f64, anchor_index: usize) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(BackendError::InvalidMask(format!(
                "score {score} outside [0, 1] for anchor {anchor_index}"
            )));
        }
        let area = mask.area();
        Ok(Self {
            mask,
            score,
            anchor_index,
            area,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn area(&self) -> usize {
        self.area
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmenterRequest {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub anchors: Vec<Anchor>,
}

impl SegmenterRequest {
    pub fn new(
        image_id: impl Into<String>,
        height: usize,
        width: usize,
        anchors: Vec<Anchor>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            height,
            width,
            anchors,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if let Some((i, a)) = self
            .anchors
            .iter()
            .enumerate()
            .find(|(_, a)| !a.in_bounds(self.height, self.width))
        {
            return Err(BackendError::InvalidRequest(format!(
                "anchor {i} at ({}, {}) outside {}x{} image",
                a.row, a.col, self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Anchors whose masks could not be obtained.
#[derive(Debug)]
pub struct AnchorFailure {
    pub anchors: Range<usize>,
    pub error: BackendError,
}

#[derive(Debug, Default)]
pub struct SegmentOutcome {
    /// Ascending `anchor_index`, then backend order.
    pub masks: Vec<CandidateMask>,
    pub failures: Vec<AnchorFailure>,
}

pub trait Segmenter: Send + Sync {
    /// Returns `Err` only when the request as a whole is unusable.
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError>;
}

impl<T: Segmenter + ?Sized> Segmenter for &T {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        (**self).segment(request)
    }
}

impl<T: Segmenter + ?Sized> Segmenter for Box<T> {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        (**self).segment(request)
    }
}

fn check_dims(request: &SegmenterRequest, height: usize, width: usize) -> Result<(), BackendError> {
    if request.height != height || request.width != width {
        return Err(BackendError::InvalidRequest(format!(
            "request is {}x{} but backend holds {}x{} masks",
            request.height, request.width, height, width
        )));
    }
    Ok(())
}
