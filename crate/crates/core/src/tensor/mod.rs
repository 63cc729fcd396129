//! Dense per-pixel arrays shared by every stage of the pipeline, plus the
//! binary file formats and the run-length mask encoding used to move them
//! between processes.
//!
//! All arrays are row-major: pixel `(row, col)` lives at `row * width + col`.

mod pgm;
mod ptm;
mod rle;

use thiserror::Error;

pub use pgm::{
    decode_binary_mask, decode_class_map, encode_binary_mask, encode_class_map, load_binary_mask,
    load_class_map, store_binary_mask, store_class_map,
};
pub(crate) use ptm::{check_magic, read_f32_payload, read_file, read_u32s, write_file};
pub use ptm::{
    decode_probability_map, encode_probability_map, load_probability_map, store_probability_map,
    PROBABILITY_MAGIC,
};
pub use rle::{rle_decode, rle_encode, RunLengthEncoding};

/// Maximum deviation of a pixel's class scores from a unit sum.
pub const SUM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data: {0} unexpected bytes after payload")]
    Trailing(usize),
    #[error("degenerate dimensions {height}x{width}x{classes}")]
    Degenerate {
        height: usize,
        width: usize,
        classes: usize,
    },
    #[error("invalid probability at pixel {pixel} (row {row}, col {col}): {reason}")]
    InvalidProbability {
        pixel: usize,
        row: usize,
        col: usize,
        reason: String,
    },
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error("data length {found} does not match dimensions (expected {expected})")]
    LengthMismatch { expected: usize, found: usize },
    #[error("RLE counts sum to {found}, expected {expected}")]
    RleSize { expected: u64, found: u64 },
}

/// Per-pixel softmax scores, class axis innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    /// Builds a map after checking every invariant: non-zero dimensions,
    /// values in `[0, 1]` and per-pixel sums within [`SUM_TOLERANCE`] of one.
    /// Maps are never renormalized.
    pub fn new(
        height: usize,
        width: usize,
        num_classes: usize,
        data: Vec<f32>,
    ) -> Result<Self, FormatError> {
        if height == 0 || width == 0 || num_classes == 0 {
            return Err(FormatError::Degenerate {
                height,
                width,
                classes: num_classes,
            });
        }
        let expected = height * width * num_classes;
        if data.len() != expected {
            return Err(FormatError::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        for (pixel, scores) in data.chunks_exact(num_classes).enumerate() {
            let invalid = |reason: String| FormatError::InvalidProbability {
                pixel,
                row: pixel / width,
                col: pixel % width,
                reason,
            };
            if let Some(v) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid(format!("score {v} outside [0, 1]")));
            }
            let sum: f64 = scores.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE as f64 {
                return Err(invalid(format!("scores sum to {sum}")));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Class scores of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.num_classes;
        &self.data[start..start + self.num_classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.num_classes)
    }

    /// Per-pixel argmax; ties go to the lowest class id.
    pub fn argmax(&self) -> ClassMap {
        let labels = self
            .pixels()
            .map(|scores| {
                let mut best = 0;
                for (k, &v) in scores.iter().enumerate() {
                    if v > scores[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        ClassMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self, FormatError> {
        if labels.len() != height * width {
            return Err(FormatError::LengthMismatch {
                expected: height * width,
                found: labels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u8) {
        self.labels[row * self.width + col] = label;
    }

    pub fn same_shape(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    pub fn max_label(&self) -> Option<u8> {
        self.labels.iter().copied().max()
    }
}

/// Row-major boolean mask; `true` marks pixels inside.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, FormatError> {
        if bits.len() != height * width {
            return Err(FormatError::LengthMismatch {
                expected: height * width,
                found: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(row, col));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    /// Row-major indices of set pixels.
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}
