//! Row-major run-length encoding for binary masks.
//!
//! `counts` alternates runs of unset and set pixels in row-major scan order,
//! always starting with an unset run (which may be zero). The JSON form is
//! `{"size": [H, W], "counts": [...]}`.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, FormatError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunLengthEncoding {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u32>,
}

impl RunLengthEncoding {
    pub fn height(&self) -> usize {
        self.size[0]
    }

    pub fn width(&self) -> usize {
        self.size[1]
    }

    /// Number of set pixels, read directly from the odd runs.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Canonical encoding: only the leading unset run may be zero.
pub fn rle_encode(mask: &BinaryMask) -> RunLengthEncoding {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in mask.bits() {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    RunLengthEncoding {
        size: [mask.height(), mask.width()],
        counts,
    }
}

/// Decodes any run list (canonical or not) whose counts sum to `H*W`.
pub fn rle_decode(rle: &RunLengthEncoding) -> Result<BinaryMask, FormatError> {
    let expected = (rle.height() * rle.width()) as u64;
    let found: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if found != expected {
        return Err(FormatError::RleSize { expected, found });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    let mut value = false;
    for &run in &rle.counts {
        bits.extend(std::iter::repeat_n(value, run as usize));
        value = !value;
    }
    BinaryMask::new(rle.height(), rle.width(), bits)
}
