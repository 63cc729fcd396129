//! Deterministic geometric stand-in for a promptable segmenter.
//!
//! An anchor inside an entity yields that entity's visible region (pixels not
//! covered by an entity with a smaller depth). Decoy rules add extra masks
//! whenever an anchor falls inside their trigger shape, which lets tests feed
//! oversized or low-confidence proposals through the fusion stage.

use serde::{Deserialize, Serialize};

use super::{check_dims, BackendError, CandidateMask, SegmentOutcome, Segmenter, SegmenterRequest};
use crate::tensor::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Rows `top..top+height`, columns `left..left+width`.
    Rect {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    /// Pixels with `(r-row)^2 + (c-col)^2 <= radius^2`.
    Circle {
        row: usize,
        col: usize,
        radius: usize,
    },
}

impl Shape {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        match *self {
            Shape::Rect {
                top,
                left,
                height,
                width,
            } => row >= top && row < top + height && col >= left && col < left + width,
            Shape::Circle {
                row: cr,
                col: cc,
                radius,
            } => {
                let dr = row.abs_diff(cr);
                let dc = col.abs_diff(cc);
                dr * dr + dc * dc <= radius * radius
            }
        }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        match *self {
            Shape::Rect {
                top,
                left,
                height: h,
                width: w,
            } => h > 0 && w > 0 && top + h <= height && left + w <= width,
            Shape::Circle { row, col, radius } => {
                row >= radius && col >= radius && row + radius < height && col + radius < width
            }
        }
    }

    pub fn rasterize(&self, height: usize, width: usize) -> BinaryMask {
        BinaryMask::from_fn(height, width, |r, c| self.contains(r, c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub shape: Shape,
    pub class: u8,
    /// Smaller is nearer the camera.
    pub depth: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyRule {
    pub trigger: Shape,
    pub mask: Shape,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub decoys: Vec<DecoyRule>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        let mut depths = std::collections::HashSet::new();
        for (i, e) in self.entities.iter().enumerate() {
            if !e.shape.fits(self.height, self.width) {
                return Err(BackendError::Scene(format!("entity {i} leaves the image")));
            }
            if !depths.insert(e.depth) {
                return Err(BackendError::Scene(format!(
                    "entity {i} repeats depth {}",
                    e.depth
                )));
            }
            if !(0.0..=1.0).contains(&e.score) {
                return Err(BackendError::Scene(format!("entity {i} score {}", e.score)));
            }
        }
        for (i, d) in self.decoys.iter().enumerate() {
            if !d.trigger.fits(self.height, self.width) || !d.mask.fits(self.height, self.width) {
                return Err(BackendError::Scene(format!("decoy {i} leaves the image")));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(BackendError::Scene(format!("decoy {i} score {}", d.score)));
            }
        }
        Ok(())
    }

    /// Index of the front-most entity covering each pixel.
    pub fn owners(&self) -> Vec<Option<usize>> {
        let mut order: Vec<usize> = (0..self.entities.len()).collect();
        order.sort_by_key(|&i| self.entities[i].depth);
        let mut owners = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                owners.push(
                    order
                        .iter()
                        .copied()
                        .find(|&i| self.entities[i].shape.contains(r, c)),
                );
            }
        }
        owners
    }
}

#[derive(Debug, Clone)]
pub struct MockOracle {
    scene: SceneSpec,
    owners: Vec<Option<usize>>,
    visible: Vec<BinaryMask>,
    decoy_masks: Vec<BinaryMask>,
}

impl MockOracle {
    pub fn new(scene: SceneSpec) -> Result<Self, BackendError> {
        scene.validate()?;
        let owners = scene.owners();
        let (h, w) = (scene.height, scene.width);
        let visible = (0..scene.entities.len())
            .map(|i| BinaryMask::from_fn(h, w, |r, c| owners[r * w + c] == Some(i)))
            .collect();
        let decoy_masks = scene
            .decoys
            .iter()
            .map(|d| d.mask.rasterize(h, w))
            .collect();
        Ok(Self {
            scene,
            owners,
            visible,
            decoy_masks,
        })
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    /// Visible region of entity `i`.
    pub fn visible(&self, i: usize) -> &BinaryMask {
        &self.visible[i]
    }
}

impl Segmenter for MockOracle {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        request.validate()?;
        check_dims(request, self.scene.height, self.scene.width)?;
        let mut outcome = SegmentOutcome::default();
        for (anchor_index, a) in request.anchors.iter().enumerate() {
            if let Some(i) = self.owners[a.row * self.scene.width + a.col] {
                outcome.masks.push(CandidateMask::new(
                    self.visible[i].clone(),
                    self.scene.entities[i].score,
                    anchor_index,
                )?);
            }
            for (d, mask) in self.scene.decoys.iter().zip(&self.decoy_masks) {
                if d.trigger.contains(a.row, a.col) {
                    outcome
                        .masks
                        .push(CandidateMask::new(mask.clone(), d.score, anchor_index)?);
                }
            }
        }
        Ok(outcome)
    }
}
