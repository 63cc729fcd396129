//! Replay of recorded masks from a JSON manifest.
//!
//! ```json
//! {"image_id": "frame_01", "height": 1080, "width": 1920,
//!  "entries": [{"anchor": [412, 903], "score": 0.93, "mask_path": "m_0.pgm"}]}
//! ```
//!
//! `mask_path` is resolved relative to the manifest's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_dims, BackendError, CandidateMask, SegmentOutcome, Segmenter, SegmenterRequest};
use crate::entropy::Anchor;
use crate::tensor::{load_binary_mask, store_binary_mask, BinaryMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub anchor: Anchor,
    pub score: f64,
    pub mask_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
struct Recorded {
    anchor: Anchor,
    score: f64,
    mask: BinaryMask,
}

/// Replays recorded masks keyed by anchor coordinates. Anchors without a
/// recording produce no masks.
#[derive(Debug, Clone)]
pub struct ManifestBackend {
    image_id: String,
    height: usize,
    width: usize,
    recorded: Vec<Recorded>,
    by_anchor: HashMap<Anchor, Vec<usize>>,
}

impl ManifestBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Manifest {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| BackendError::Manifest {
                path: shown.clone(),
                message: format!("malformed JSON: {e}"),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));

        let missing: Vec<String> = manifest
            .entries
            .iter()
            .map(|e| base.join(&e.mask_path))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(BackendError::Manifest {
                path: shown,
                message: format!("missing mask files: {}", missing.join(", ")),
            });
        }

        let mut recorded = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let mask_path = base.join(&entry.mask_path);
            let mask = load_binary_mask(&mask_path).map_err(|e| BackendError::Manifest {
                path: shown.clone(),
                message: format!("{}: {e}", mask_path.display()),
            })?;
            recorded.push(Recorded {
                anchor: entry.anchor,
                score: entry.score,
                mask,
            });
        }
        Self::from_parts(manifest.image_id, manifest.height, manifest.width, recorded).map_err(
            |message| BackendError::Manifest {
                path: shown,
                message,
            },
        )
    }

    /// Builds a backend from in-memory recordings, in replay order.
    pub fn from_entries(
        image_id: impl Into<String>,
        height: usize,
        width: usize,
        entries: Vec<(Anchor, f64, BinaryMask)>,
    ) -> Result<Self, BackendError> {
        let recorded = entries
            .into_iter()
            .map(|(anchor, score, mask)| Recorded {
                anchor,
                score,
                mask,
            })
            .collect();
        Self::from_parts(image_id.into(), height, width, recorded)
            .map_err(BackendError::InvalidMask)
    }

    fn from_parts(
        image_id: String,
        height: usize,
        width: usize,
        recorded: Vec<Recorded>,
    ) -> Result<Self, String> {
        let mut by_anchor: HashMap<Anchor, Vec<usize>> = HashMap::new();
        for (i, r) in recorded.iter().enumerate() {
            if !r.mask.same_shape(height, width) {
                return Err(format!(
                    "entry {i}: mask is {}x{}, manifest declares {height}x{width}",
                    r.mask.height(),
                    r.mask.width()
                ));
            }
            if !(0.0..=1.0).contains(&r.score) {
                return Err(format!("entry {i}: score {} outside [0, 1]", r.score));
            }
            if !r.anchor.in_bounds(height, width) {
                return Err(format!("entry {i}: anchor out of bounds"));
            }
            by_anchor.entry(r.anchor).or_default().push(i);
        }
        Ok(Self {
            image_id,
            height,
            width,
            recorded,
            by_anchor,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.recorded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recorded.is_empty()
    }

    /// Recordings in manifest order.
    pub fn entries(&self) -> impl Iterator<Item = (Anchor, f64, &BinaryMask)> {
        self.recorded.iter().map(|r| (r.anchor, r.score, &r.mask))
    }
}

impl Segmenter for ManifestBackend {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        request.validate()?;
        check_dims(request, self.height, self.width)?;
        let mut outcome = SegmentOutcome::default();
        for (anchor_index, anchor) in request.anchors.iter().enumerate() {
            for &i in self.by_anchor.get(anchor).into_iter().flatten() {
                let r = &self.recorded[i];
                outcome
                    .masks
                    .push(CandidateMask::new(r.mask.clone(), r.score, anchor_index)?);
            }
        }
        Ok(outcome)
    }
}

/// Writes `entries` as `<stem>_<i>.pgm` mask files plus `<stem>.json` into
/// `dir`, returning the manifest path.
pub fn write_manifest(
    dir: impl AsRef<Path>,
    stem: &str,
    image_id: &str,
    height: usize,
    width: usize,
    entries: &[(Anchor, f64, BinaryMask)],
) -> Result<PathBuf, BackendError> {
    let dir = dir.as_ref();
    let mut manifest = Manifest {
        image_id: image_id.to_string(),
        height,
        width,
        entries: Vec::with_capacity(entries.len()),
    };
    for (i, (anchor, score, mask)) in entries.iter().enumerate() {
        let name = format!("{stem}_{i}.pgm");
        store_binary_mask(mask, dir.join(&name))?;
        manifest.entries.push(ManifestEntry {
            anchor: *anchor,
            score: *score,
            mask_path: name,
        });
    }
    let path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| BackendError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(path)
}
