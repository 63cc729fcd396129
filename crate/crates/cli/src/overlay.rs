//! Class-colour overlay export.
//!
//! Each pixel is the 50/50 blend of the grayscale base and the class colour,
//! rounded down. Labels beyond the palette wrap around. Output is binary PPM
//! (`P6`, maxval 255).

use std::path::Path;

use anchor_refine::tensor::{load_class_map, ClassMap};
use anyhow::{ensure, Context, Result};

use crate::output::atomic_write;

/// Cityscapes-style colours for the first 18 labels.
pub const PALETTE: [[u8; 3]; 18] = [
    [0, 0, 0],
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 0, 230],
    [119, 11, 32],
];

pub fn render(pred: &ClassMap, base: &ClassMap) -> Result<Vec<u8>> {
    ensure!(
        pred.same_shape(base.height(), base.width()),
        "prediction is {}x{} but base image is {}x{}",
        pred.height(),
        pred.width(),
        base.height(),
        base.width()
    );
    let mut out = format!("P6\n{} {}\n255\n", pred.width(), pred.height()).into_bytes();
    for (&label, &gray) in pred.labels().iter().zip(base.labels()) {
        let colour = PALETTE[label as usize % PALETTE.len()];
        out.extend(colour.iter().map(|&c| ((c as u16 + gray as u16) / 2) as u8));
    }
    Ok(out)
}

pub fn run(pred: &Path, base: &Path, out: &Path) -> Result<()> {
    let pred_map = load_class_map(pred).with_context(|| format!("loading {}", pred.display()))?;
    let base_map = load_class_map(base).with_context(|| format!("loading {}", base.display()))?;
    atomic_write(out, &render(&pred_map, &base_map)?)
}
