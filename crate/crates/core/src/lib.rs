//! Entropy-anchored refinement of semantic segmentation predictions.
//!
//! A base model's softmax scores are turned into an entropy map, thin
//! boundary uncertainty is filtered out, and point anchors sampled from the
//! remaining high-entropy regions prompt a promptable segmenter. The returned
//! masks are filtered by confidence and area, labelled by the base
//! prediction's majority class under them, and written back smallest-last.
//!
//! ```no_run
//! use anchor_refine::{backend::ManifestBackend, config::RefineConfig, tensor};
//!
//! let y = tensor::load_class_map("pred.pgm")?;
//! let p = tensor::load_probability_map("prob.ptm")?;
//! let backend = ManifestBackend::load("masks/manifest.json")?;
//! let out = RefineConfig::default().refine(&y, &p, &backend, "frame_01")?;
//! tensor::store_class_map(&out.prediction, "refined.pgm")?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod backend;
pub mod config;
pub mod entropy;
pub mod fusion;
pub mod metrics;
pub mod tensor;

pub use backend::{CandidateMask, Segmenter, SegmenterRequest};
pub use config::RefineConfig;
pub use entropy::{Anchor, EntropyMap, FilterParams};
pub use fusion::{refine, ClassedMask, FusionParams, Refinement};
pub use tensor::{BinaryMask, ClassMap, ProbabilityMap, RunLengthEncoding};
