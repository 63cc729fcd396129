//! IoU / mIoU evaluation, synthetic scenes and the ablation harness.

mod ablation;
mod synth;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::fusion::FusionError;
use crate::tensor::{ClassMap, FormatError};

pub use ablation::{format_ablation_table, run_ablation, AblationRow};
pub use synth::{generate_scene, SceneParams, SyntheticScene};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction is {pred_h}x{pred_w}, ground truth is {truth_h}x{truth_w}")]
    Shape {
        pred_h: usize,
        pred_w: usize,
        truth_h: usize,
        truth_w: usize,
    },
    #[error("{which} label {label} at pixel {pixel} is not below the class count {n}")]
    Label {
        which: &'static str,
        label: u8,
        pixel: usize,
        n: usize,
    },
    #[error("class counts differ: {0} vs {1}")]
    ClassCount(usize, usize),
    #[error("invalid scene parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// `cells[t * n + p]` counts pixels of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![0; n * n],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.cells[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// Adds one image. Pixels whose truth equals `ignore_label` are skipped.
    pub fn accumulate(
        &mut self,
        pred: &ClassMap,
        truth: &ClassMap,
        ignore_label: Option<u8>,
    ) -> Result<(), MetricsError> {
        if !pred.same_shape(truth.height(), truth.width()) {
            return Err(MetricsError::Shape {
                pred_h: pred.height(),
                pred_w: pred.width(),
                truth_h: truth.height(),
                truth_w: truth.width(),
            });
        }
        let n = self.n;
        let check = |which, label: u8, pixel| {
            if (label as usize) < n {
                Ok(label as usize)
            } else {
                Err(MetricsError::Label {
                    which,
                    label,
                    pixel,
                    n,
                })
            }
        };
        let mut local = vec![0u64; n * n];
        for (i, (&p, &t)) in pred.labels().iter().zip(truth.labels()).enumerate() {
            if Some(t) == ignore_label {
                continue;
            }
            let t = check("truth", t, i)?;
            let p = check("prediction", p, i)?;
            local[t * n + p] += 1;
        }
        for (c, l) in self.cells.iter_mut().zip(local) {
            *c += l;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.n != self.n {
            return Err(MetricsError::ClassCount(self.n, other.n));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` per class; `None` where the denominator is zero.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.n)
            .map(|c| {
                let tp = self.get(c, c);
                let fn_: u64 = (0..self.n).map(|p| self.get(c, p)).sum::<u64>() - tp;
                let fp: u64 = (0..self.n).map(|t| self.get(t, c)).sum::<u64>() - tp;
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean over classes with a defined IoU; `None` when no class is defined.
    pub fn mean_iou(&self) -> Option<f64> {
        let defined: Vec<f64> = self.iou_per_class().into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        self.merge(rhs).expect("class counts must match");
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: ConfusionMatrix) -> ConfusionMatrix {
        self += &rhs;
        self
    }
}

/// Confusion matrix of a single prediction/truth pair.
pub fn accumulate_confusion(
    pred: &ClassMap,
    truth: &ClassMap,
    n: usize,
    ignore_label: Option<u8>,
) -> Result<ConfusionMatrix, MetricsError> {
    let mut cm = ConfusionMatrix::new(n);
    cm.accumulate(pred, truth, ignore_label)?;
    Ok(cm)
}

pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    cm.iou_per_class()
}

pub fn mean_iou(cm: &ConfusionMatrix) -> Option<f64> {
    cm.mean_iou()
}

/// Serialized evaluation result. Undefined IoUs appear as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub pixel_count: u64,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(cm: &ConfusionMatrix, config: serde_json::Value) -> Self {
        Self {
            per_class_iou: cm.iou_per_class(),
            miou: cm.mean_iou(),
            pixel_count: cm.total(),
            config,
        }
    }
}
