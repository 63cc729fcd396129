use std::path::{Path, PathBuf};

use anchor_refine::backend::{
    BackendError, HttpBackend, ManifestBackend, MockOracle, SceneSpec, Segmenter,
};
use anchor_refine::entropy::{
    compute_entropy, encode_entropy_map, load_entropy_map, region_filter, sample_anchors,
};
use anchor_refine::fusion::FusionError;
use anchor_refine::metrics::{
    format_ablation_table, generate_scene, run_ablation, ConfusionMatrix, EvalReport, MetricsError,
    SceneParams, SyntheticScene,
};
use anchor_refine::tensor::{
    encode_binary_mask, encode_class_map, load_binary_mask, load_class_map, load_probability_map,
    FormatError,
};
use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BackendKind, ConfigFlags, PipelineConfig};
use crate::output::{atomic_write, atomic_write_json};

/// 2 for anything that failed reading, writing or talking to a backend,
/// 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<FormatError>() {
            if matches!(e, FormatError::Io { .. }) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            if backend_is_io(e) {
                return 2;
            }
        }
        if let Some(FusionError::Backend(e)) = cause.downcast_ref::<FusionError>() {
            if backend_is_io(e) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            match e {
                MetricsError::Io { .. } | MetricsError::Format(FormatError::Io { .. }) => return 2,
                MetricsError::Backend(b) if backend_is_io(b) => return 2,
                MetricsError::Fusion(FusionError::Backend(b)) if backend_is_io(b) => return 2,
                _ => {}
            }
        }
    }
    1
}

fn backend_is_io(e: &BackendError) -> bool {
    match e {
        BackendError::Connection { .. }
        | BackendError::Status { .. }
        | BackendError::Protocol { .. }
        | BackendError::Manifest { .. } => true,
        BackendError::Format(f) => matches!(f, FormatError::Io { .. }),
        _ => false,
    }
}

pub fn entropy(prob: &Path, out: &Path) -> Result<()> {
    let p = load_probability_map(prob)?;
    let ent = compute_entropy(&p);
    atomic_write(out, &encode_entropy_map(&ent))
}

pub fn regions(entropy: &Path, out: &Path, flags: &ConfigFlags) -> Result<()> {
    let config = flags.resolve()?;
    let ent = load_entropy_map(entropy)?;
    let region = region_filter(&ent, config.refine_config().filter_params())?;
    log::info!(
        "{} of {} pixels above threshold",
        region.area(),
        ent.values().len()
    );
    atomic_write(out, &encode_binary_mask(&region))
}

pub fn anchors(region: &Path, out: &Path, flags: &ConfigFlags) -> Result<()> {
    let config = flags.resolve()?;
    let mask = load_binary_mask(region)?;
    let anchors = sample_anchors(&mask, config.k, config.seed);
    atomic_write_json(out, &anchors)
}

fn build_backend(config: &PipelineConfig) -> Result<Box<dyn Segmenter>> {
    Ok(match config.backend {
        BackendKind::Manifest => {
            let Some(path) = &config.manifest else {
                bail!("the manifest backend needs --manifest");
            };
            Box::new(ManifestBackend::load(path)?)
        }
        BackendKind::Mock => {
            let Some(path) = &config.scene else {
                bail!("the mock backend needs --scene");
            };
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scene {}", path.display()))?;
            let scene: SceneSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing scene {}", path.display()))?;
            Box::new(MockOracle::new(scene)?)
        }
        BackendKind::Http => {
            let Some(endpoint) = &config.endpoint else {
                bail!("the http backend needs --endpoint");
            };
            Box::new(HttpBackend::new(endpoint.clone()).with_chunk_size(config.chunk_size))
        }
    })
}

#[derive(Serialize)]
struct AppliedMask {
    anchor_index: usize,
    class: u8,
    area: usize,
}

#[derive(Serialize)]
struct FailureReport {
    anchors: [usize; 2],
    error: String,
}

#[derive(Serialize)]
struct RefineReport<'a> {
    image_id: &'a str,
    anchors: usize,
    candidates: usize,
    dropped_empty: usize,
    applied: Vec<AppliedMask>,
    failures: Vec<FailureReport>,
    changed_pixels: usize,
    config: &'a PipelineConfig,
}

pub fn refine(
    pred: &Path,
    prob: &Path,
    out: &Path,
    image_id: Option<String>,
    report: Option<&Path>,
    flags: &ConfigFlags,
) -> Result<()> {
    let config = flags.resolve()?;
    let y = load_class_map(pred)?;
    let p = load_probability_map(prob)?;
    let image_id = image_id.unwrap_or_else(|| {
        pred.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    // skip backend setup entirely when it would not be consulted
    let result = if config.enhance {
        let backend = build_backend(&config)?;
        config
            .refine_config()
            .refine(&y, &p, backend.as_ref(), &image_id)?
    } else {
        let unused = ManifestBackend::from_entries(&image_id, y.height(), y.width(), Vec::new())?;
        config.refine_config().refine(&y, &p, &unused, &image_id)?
    };
    atomic_write(out, &encode_class_map(&result.prediction))?;
    if let Some(path) = report {
        let changed_pixels = result
            .prediction
            .labels()
            .iter()
            .zip(y.labels())
            .filter(|(a, b)| a != b)
            .count();
        let summary = RefineReport {
            image_id: &image_id,
            anchors: result.anchors.len(),
            candidates: result.candidates,
            dropped_empty: result.dropped_empty,
            applied: result
                .applied
                .iter()
                .map(|m| AppliedMask {
                    anchor_index: m.anchor_index,
                    class: m.cls,
                    area: m.area,
                })
                .collect(),
            failures: result
                .failures
                .iter()
                .map(|f| FailureReport {
                    anchors: [f.anchors.start, f.anchors.end],
                    error: f.error.to_string(),
                })
                .collect(),
            changed_pixels,
            config: &config,
        };
        atomic_write_json(path, &summary)?;
    }
    Ok(())
}

pub fn eval(
    preds: &[PathBuf],
    truths: &[PathBuf],
    num_classes: usize,
    out: &Path,
    flags: &ConfigFlags,
) -> Result<()> {
    ensure!(
        preds.len() == truths.len(),
        "got {} predictions but {} ground-truth maps",
        preds.len(),
        truths.len()
    );
    ensure!(
        (1..=256).contains(&num_classes),
        "--num-classes must be in 1..=256"
    );
    let config = flags.resolve()?;
    let matrices: Vec<ConfusionMatrix> = preds
        .par_iter()
        .zip(truths)
        .map(|(pred, truth)| -> Result<ConfusionMatrix> {
            let y = load_class_map(pred)?;
            let t = load_class_map(truth)?;
            let mut cm = ConfusionMatrix::new(num_classes);
            cm.accumulate(&y, &t, config.ignore_label)
                .with_context(|| {
                    format!("scoring {} against {}", pred.display(), truth.display())
                })?;
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(num_classes);
    for cm in &matrices {
        total.merge(cm)?;
    }
    let mut echo = serde_json::to_value(&config)?;
    echo["num_classes"] = num_classes.into();
    let report = EvalReport::new(&total, echo);
    match report.miou {
        Some(m) => log::info!("mIoU {:.4} over {} pixels", m, report.pixel_count),
        None => log::warn!("no class has a defined IoU"),
    }
    atomic_write_json(out, &report)
}

pub fn synth(out_dir: &Path, seed: u64, count: usize, params: Option<&Path>) -> Result<()> {
    let params: SceneParams = match params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SceneParams::default(),
    };
    params.validate()?;
    if out_dir.exists() && std::fs::read_dir(out_dir)?.next().is_some() {
        bail!("{} already exists and is not empty", out_dir.display());
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    // build everything in a sibling temp dir so a failure leaves nothing behind
    let staging = tempfile::tempdir_in(parent)
        .with_context(|| format!("creating staging directory in {}", parent.display()))?;
    (0..count).into_par_iter().try_for_each(|i| -> Result<()> {
        let scene = generate_scene(seed.wrapping_add(i as u64), &params)?;
        scene.save(staging.path().join(format!("scene_{i:03}")))?;
        Ok(())
    })?;
    atomic_write_json(&staging.path().join("params.json"), &params)?;
    if out_dir.exists() {
        std::fs::remove_dir(out_dir)?;
    }
    std::fs::rename(staging.path(), out_dir)
        .with_context(|| format!("moving scenes into {}", out_dir.display()))?;
    // the staging path no longer exists; stop the guard from cleaning up
    let _ = staging.keep();
    Ok(())
}

fn load_scenes(dir: &Path) -> Result<Vec<SyntheticScene>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scene_"))
        })
        .collect();
    dirs.sort();
    ensure!(
        !dirs.is_empty(),
        "no scene_* directories in {}",
        dir.display()
    );
    dirs.par_iter()
        .map(|d| SyntheticScene::load(d).with_context(|| format!("loading {}", d.display())))
        .collect()
}

pub fn ablate(
    scene_dir: &Path,
    out: &Path,
    table: Option<&Path>,
    flags: &ConfigFlags,
) -> Result<()> {
    let config = flags.resolve()?;
    let scenes = load_scenes(scene_dir)?;
    let num_classes = scenes[0].base_p.num_classes();
    if let Some(s) = scenes
        .iter()
        .find(|s| s.base_p.num_classes() != num_classes)
    {
        bail!(
            "scenes disagree on the class count ({} vs {})",
            num_classes,
            s.base_p.num_classes()
        );
    }
    let grid = config.refine_config().ablation_grid();
    let rows = run_ablation(&scenes, &grid, num_classes, config.ignore_label)?;
    let text = format_ablation_table(&rows);
    eprint!("{text}");
    atomic_write_json(out, &rows)?;
    if let Some(path) = table {
        atomic_write(path, text.as_bytes())?;
    }
    Ok(())
}
