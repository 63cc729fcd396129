//! Seeded synthetic scenes with a known ground truth and a corrupted base
//! prediction.
//!
//! Class 0 fills the image above a random horizon and class 1 below it.
//! Entities (circles and squares, classes `2..num_classes`) sit on top. Each
//! entity is corrupted with probability `noise`: a square zone centred on its
//! right edge has its entity pixels relabelled to the stuff class underneath,
//! and every pixel in the zone gets a near-uniform score vector. Outside the
//! zones, scores are confident, with a mild two-class split along label
//! boundaries.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::backend::{DecoyRule, Entity, SceneSpec, Shape};
use crate::tensor::{
    load_class_map, load_probability_map, store_class_map, store_probability_map, ClassMap,
    ProbabilityMap,
};

const SKY: u8 = 0;
const ROAD: u8 = 1;
const STUFF_DEPTH: u32 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    pub min_radius: usize,
    pub max_radius: usize,
    /// Probability that an entity receives a corruption zone.
    pub noise: f64,
    /// Weight of the uniform distribution inside corruption zones.
    pub corruption_mix: f64,
    /// Weight of the uniform distribution on clean pixels.
    pub clean_mix: f64,
    /// Score moved to the neighbouring class on label boundaries.
    pub boundary_mix: f64,
    /// Side of the square corruption zone (odd).
    pub zone_size: usize,
    pub entity_score: f64,
    /// Emit an oversized and a low-score decoy per corrupted entity.
    pub decoys: bool,
    pub decoy_margin: usize,
    pub oversized_score: f64,
    pub low_score: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_classes: 5,
            min_entities: 2,
            max_entities: 4,
            min_radius: 5,
            max_radius: 8,
            noise: 1.0,
            corruption_mix: 0.9,
            clean_mix: 0.05,
            boundary_mix: 0.45,
            zone_size: 7,
            entity_score: 0.95,
            decoys: true,
            decoy_margin: 8,
            oversized_score: 0.9,
            low_score: 0.4,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: &str| Err(MetricsError::Params(m.to_string()));
        if self.num_classes < 3 || self.num_classes > 256 {
            return bad("num_classes must be in 3..=256");
        }
        if self.min_entities > self.max_entities {
            return bad("min_entities exceeds max_entities");
        }
        if self.min_radius == 0 || self.min_radius > self.max_radius {
            return bad("radius range must satisfy 1 <= min <= max");
        }
        if self.zone_size == 0 || self.zone_size.is_multiple_of(2) {
            return bad("zone_size must be odd");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("corruption_mix", self.corruption_mix),
            ("clean_mix", self.clean_mix),
            ("entity_score", self.entity_score),
            ("oversized_score", self.oversized_score),
            ("low_score", self.low_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::Params(format!("{name} must be in [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&self.boundary_mix) {
            return bad("boundary_mix must be in [0, 0.5)");
        }
        // the largest entity plus its zone must fit
        let half = self.zone_size / 2;
        let reach = self.max_radius.max(half);
        if 2 * reach + 1 > self.height || reach + self.max_radius + half + 1 > self.width {
            return Err(MetricsError::Params(format!(
                "entities of radius {} with a {}-pixel zone do not fit a {}x{} image",
                self.max_radius, self.zone_size, self.height, self.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub truth: ClassMap,
    pub base_p: ProbabilityMap,
    /// Argmax of `base_p`.
    pub prediction: ClassMap,
    pub scene: SceneSpec,
    pub zones: Vec<Shape>,
}

impl SyntheticScene {
    /// Writes `truth.pgm`, `pred.pgm`, `prob.ptm`, `scene.json` and `zones.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), MetricsError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| MetricsError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        store_class_map(&self.truth, dir.join("truth.pgm"))?;
        store_class_map(&self.prediction, dir.join("pred.pgm"))?;
        store_probability_map(&self.base_p, dir.join("prob.ptm"))?;
        let scene = serde_json::to_string_pretty(&self.scene).expect("scene serializes");
        std::fs::write(dir.join("scene.json"), scene).map_err(io)?;
        let zones = serde_json::to_string(&self.zones).expect("zones serialize");
        std::fs::write(dir.join("zones.json"), zones).map_err(io)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let dir = dir.as_ref();
        let read_json = |name: &str| -> Result<String, MetricsError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| MetricsError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let parse_err = |name: &str, e: serde_json::Error| MetricsError::Io {
            path: dir.join(name).display().to_string(),
            message: e.to_string(),
        };
        let scene: SceneSpec = serde_json::from_str(&read_json("scene.json")?)
            .map_err(|e| parse_err("scene.json", e))?;
        let zones: Vec<Shape> = match dir.join("zones.json").exists() {
            true => serde_json::from_str(&read_json("zones.json")?)
                .map_err(|e| parse_err("zones.json", e))?,
            false => Vec::new(),
        };
        Ok(Self {
            truth: load_class_map(dir.join("truth.pgm"))?,
            prediction: load_class_map(dir.join("pred.pgm"))?,
            base_p: load_probability_map(dir.join("prob.ptm"))?,
            scene,
            zones,
        })
    }
}

fn sample_entity(
    rng: &mut ChaCha8Rng,
    params: &SceneParams,
    placed: &[(usize, usize, usize)],
) -> (usize, usize, usize) {
    let half_zone = params.zone_size / 2;
    let mut candidate = (0, 0, 0);
    for _ in 0..64 {
        let radius = rng.gen_range(params.min_radius..=params.max_radius);
        let reach = radius.max(half_zone);
        let row = rng.gen_range(reach..params.height - reach);
        let col = rng.gen_range(radius.max(half_zone)..params.width - radius - half_zone);
        candidate = (row, col, radius);
        let clear = placed.iter().all(|&(r, c, rad)| {
            let gap = rad + radius + half_zone + 1;
            r.abs_diff(row) > gap || c.abs_diff(col) > gap
        });
        if clear {
            break;
        }
    }
    candidate
}

/// Generates one scene. A pure function of `(seed, params)`.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene, MetricsError> {
    params.validate()?;
    let (h, w, n) = (params.height, params.width, params.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let horizon = rng.gen_range(h / 3..=(2 * h) / 3).max(1);
    let mut entities = vec![
        Entity {
            shape: Shape::Rect {
                top: 0,
                left: 0,
                height: horizon,
                width: w,
            },
            class: SKY,
            depth: STUFF_DEPTH,
            score: params.entity_score,
        },
        Entity {
            shape: Shape::Rect {
                top: horizon,
                left: 0,
                height: h - horizon,
                width: w,
            },
            class: ROAD,
            depth: STUFF_DEPTH + 1,
            score: params.entity_score,
        },
    ];
    let stuff_at = |row: usize| if row < horizon { SKY } else { ROAD };

    let count = rng.gen_range(params.min_entities..=params.max_entities);
    let mut placed = Vec::with_capacity(count);
    let mut corrupted = Vec::new();
    for i in 0..count {
        let (row, col, radius) = sample_entity(&mut rng, params, &placed);
        placed.push((row, col, radius));
        let shape = if rng.gen_bool(0.5) {
            Shape::Circle { row, col, radius }
        } else {
            Shape::Rect {
                top: row - radius,
                left: col - radius,
                height: 2 * radius + 1,
                width: 2 * radius + 1,
            }
        };
        let class = rng.gen_range(2..n) as u8;
        entities.push(Entity {
            shape,
            class,
            depth: i as u32,
            score: params.entity_score,
        });
        if rng.gen_bool(params.noise) {
            corrupted.push(entities.len() - 1);
        }
    }

    let scene_entities = entities;
    let mut scene = SceneSpec {
        height: h,
        width: w,
        entities: scene_entities,
        decoys: Vec::new(),
    };
    let owners = scene.owners();
    let truth_labels: Vec<u8> = owners
        .iter()
        .map(|o| scene.entities[o.expect("stuff covers the image")].class)
        .collect();

    let half_zone = params.zone_size / 2;
    let mut corrupt: Vec<Option<u8>> = vec![None; h * w];
    let mut zones = Vec::new();
    for &e in &corrupted {
        let (row, col, radius) = placed[e - 2];
        let zone = Shape::Rect {
            top: row - half_zone,
            left: col + radius - half_zone,
            height: params.zone_size,
            width: params.zone_size,
        };
        for r in 0..h {
            for c in 0..w {
                if zone.contains(r, c) {
                    let i = r * w + c;
                    corrupt[i] = Some(if owners[i] == Some(e) {
                        stuff_at(r)
                    } else {
                        truth_labels[i]
                    });
                }
            }
        }
        if params.decoys {
            let m = params.decoy_margin;
            let top = (row - radius).saturating_sub(m);
            let left = (col - radius).saturating_sub(m);
            let bottom = (row + radius + m + 1).min(h);
            let right = (col + radius + m + 1).min(w);
            scene.decoys.push(DecoyRule {
                trigger: zone,
                mask: Shape::Rect {
                    top,
                    left,
                    height: bottom - top,
                    width: right - left,
                },
                score: params.oversized_score,
            });
            scene.decoys.push(DecoyRule {
                trigger: zone,
                mask: Shape::Rect {
                    top: row - radius,
                    left: col - radius,
                    height: 2 * radius + 1,
                    width: 2 * radius + 1,
                },
                score: params.low_score,
            });
        }
        zones.push(zone);
    }

    let uniform = 1.0 / n as f64;
    let mut data = vec![0.0f32; h * w * n];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let px = &mut data[i * n..(i + 1) * n];
            if let Some(label) = corrupt[i] {
                let lam = params.corruption_mix;
                for (k, v) in px.iter_mut().enumerate() {
                    let hot = if k == label as usize { 1.0 - lam } else { 0.0 };
                    *v = (hot + lam * uniform) as f32;
                }
                continue;
            }
            let own = truth_labels[i];
            let neighbour = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
            ]
            .into_iter()
            .flatten()
            .map(|j| truth_labels[j])
            .find(|&l| l != own);
            match neighbour {
                Some(other) => {
                    px[own as usize] = (1.0 - params.boundary_mix) as f32;
                    px[other as usize] = params.boundary_mix as f32;
                }
                None => {
                    let lam = params.clean_mix;
                    for (k, v) in px.iter_mut().enumerate() {
                        let hot = if k == own as usize { 1.0 - lam } else { 0.0 };
                        *v = (hot + lam * uniform) as f32;
                    }
                }
            }
        }
    }

    let base_p = ProbabilityMap::new(h, w, n, data)?;
    let prediction = base_p.argmax();
    Ok(SyntheticScene {
        truth: ClassMap::new(h, w, truth_labels)?,
        base_p,
        prediction,
        scene,
        zones,
    })
}
