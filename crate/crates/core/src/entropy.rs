//! Uncertainty maps and prompt anchors.
//!
//! Per-pixel Shannon entropy (nats) of the class scores, a `w x w` mean
//! filter with a `>= tau` binarization that removes thin boundary ridges
//! while keeping area-wise uncertainty, and seeded sampling of anchor pixels
//! from what survives.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    check_magic, read_f32_payload, read_file, read_u32s, write_file, BinaryMask, FormatError,
    ProbabilityMap,
};

pub const ENTROPY_MAGIC: &[u8; 4] = b"ENT1";

/// Region filter defaults: 5x5 window, threshold 1.0 nat.
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_ANCHORS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("window width {0} must be odd and at least 1")]
    InvalidWindow(usize),
    #[error("threshold {0} must be finite and non-negative")]
    InvalidTau(f64),
    #[error("window width {w} too large for a {height}x{width} map (max {max})")]
    WindowTooLarge {
        w: usize,
        height: usize,
        width: usize,
        max: usize,
    },
}

/// Per-pixel entropy in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl EntropyMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self, FormatError> {
        if height == 0 || width == 0 {
            return Err(FormatError::Degenerate {
                height,
                width,
                classes: 1,
            });
        }
        if values.len() != height * width {
            return Err(FormatError::LengthMismatch {
                expected: height * width,
                found: values.len(),
            });
        }
        if let Some((pixel, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(FormatError::InvalidProbability {
                pixel,
                row: pixel / width,
                col: pixel % width,
                reason: format!("entropy {v} is not a finite non-negative value"),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

/// Entropy of one pixel, `-sum p ln p` with `0 ln 0 = 0`, clamped to
/// `[0, ln N]` so slightly unnormalized inputs cannot exceed the maximum.
pub fn pixel_entropy(scores: &[f32]) -> f32 {
    let h: f64 = scores
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let p = p as f64;
            -p * p.ln()
        })
        .sum();
    h.clamp(0.0, (scores.len() as f64).ln()) as f32
}

pub fn compute_entropy(p: &ProbabilityMap) -> EntropyMap {
    EntropyMap {
        height: p.height(),
        width: p.width(),
        values: p.pixels().map(pixel_entropy).collect(),
    }
}

/// Window width and threshold of the region filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub w: usize,
    pub tau: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            w: DEFAULT_WINDOW,
            tau: DEFAULT_TAU,
        }
    }
}

impl FilterParams {
    pub fn new(w: usize, tau: f64) -> Result<Self, FilterError> {
        let params = Self { w, tau };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.w == 0 || self.w.is_multiple_of(2) {
            return Err(FilterError::InvalidWindow(self.w));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(FilterError::InvalidTau(self.tau));
        }
        Ok(())
    }
}

/// Mean of the `w x w` window centred on every pixel, replicate-padded at the
/// borders. Each window is summed in the same row-then-column order whatever
/// the thread count, so results are bitwise reproducible.
pub fn window_means(ent: &EntropyMap, w: usize) -> Vec<f64> {
    let (h, wd) = (ent.height as isize, ent.width as isize);
    let half = (w / 2) as isize;
    let norm = (w * w) as f64;
    let mut out = vec![0.0f64; ent.values.len()];
    out.par_chunks_mut(ent.width)
        .enumerate()
        .for_each(|(row, out_row)| {
            let row = row as isize;
            for (col, slot) in out_row.iter_mut().enumerate() {
                let col = col as isize;
                let mut sum = 0.0f64;
                for dr in -half..=half {
                    let r = (row + dr).clamp(0, h - 1) as usize;
                    let base = r * ent.width;
                    for dc in -half..=half {
                        let c = (col + dc).clamp(0, wd - 1) as usize;
                        sum += ent.values[base + c] as f64;
                    }
                }
                *slot = sum / norm;
            }
        });
    out
}

/// Mean-filter the entropy map and keep pixels whose window mean is `>= tau`.
pub fn region_filter(ent: &EntropyMap, params: FilterParams) -> Result<BinaryMask, FilterError> {
    params.validate()?;
    let max = 2 * ent.height.min(ent.width) - 1;
    if params.w > max {
        return Err(FilterError::WindowTooLarge {
            w: params.w,
            height: ent.height,
            width: ent.width,
            max,
        });
    }
    let bits = window_means(ent, params.w)
        .into_iter()
        .map(|m| m >= params.tau)
        .collect();
    Ok(BinaryMask::new(ent.height, ent.width, bits).expect("dimensions preserved"))
}

/// A pixel prompt. Serializes as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Anchor {
    pub row: usize,
    pub col: usize,
}

impl Anchor {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.row < height && self.col < width
    }
}

impl From<[usize; 2]> for Anchor {
    fn from([row, col]: [usize; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Anchor> for [usize; 2] {
    fn from(a: Anchor) -> Self {
        [a.row, a.col]
    }
}

/// Uniform sample of up to `k` distinct set pixels of `region`, without
/// replacement. The order is a pure function of `(region, k, seed)`.
pub fn sample_anchors(region: &BinaryMask, k: usize, seed: u64) -> Vec<Anchor> {
    let candidates: Vec<usize> = region.set_indices().collect();
    let amount = k.min(candidates.len());
    if amount == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|i| {
            let idx = candidates[i];
            Anchor::new(idx / region.width(), idx % region.width())
        })
        .collect()
}

pub fn encode_entropy_map(map: &EntropyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.values.len() * 4);
    out.extend_from_slice(ENTROPY_MAGIC);
    for dim in [map.height, map.width] {
        out.extend_from_slice(
            &u32::try_from(dim)
                .expect("dimension exceeds u32")
                .to_le_bytes(),
        );
    }
    for v in &map.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `ENT1` file: magic, `H` and `W` as little-endian `u32`, then `H*W`
/// little-endian `f32` values, row-major.
pub fn decode_entropy_map(bytes: &[u8]) -> Result<EntropyMap, FormatError> {
    check_magic(bytes, ENTROPY_MAGIC)?;
    let [h, w] = read_u32s::<2>(&bytes[4..])?;
    let (h, w) = (h as usize, w as usize);
    if h == 0 || w == 0 {
        return Err(FormatError::Degenerate {
            height: h,
            width: w,
            classes: 1,
        });
    }
    EntropyMap::new(h, w, read_f32_payload(&bytes[12..], h * w)?)
}

pub fn load_entropy_map(path: impl AsRef<Path>) -> Result<EntropyMap, FormatError> {
    decode_entropy_map(&read_file(path.as_ref())?)
}

pub fn store_entropy_map(map: &EntropyMap, path: impl AsRef<Path>) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_entropy_map(map))
}
