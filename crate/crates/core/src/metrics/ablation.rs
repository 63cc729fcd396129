//! Runs a scene batch through a grid of refinement configurations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, EvalReport, MetricsError, SyntheticScene};
use crate::backend::MockOracle;
use crate::config::RefineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

impl AblationRow {
    pub fn miou(&self) -> Option<f64> {
        self.report.miou
    }
}

/// Refines every scene under every configuration, prompting a mock oracle
/// built from the scene's own layout, and scores the batch per row.
pub fn run_ablation(
    scenes: &[SyntheticScene],
    grid: &[(String, RefineConfig)],
    num_classes: usize,
    ignore_label: Option<u8>,
) -> Result<Vec<AblationRow>, MetricsError> {
    let oracles: Vec<MockOracle> = scenes
        .iter()
        .map(|s| MockOracle::new(s.scene.clone()))
        .collect::<Result<_, _>>()?;
    grid.iter()
        .map(|(name, config)| {
            config.validate()?;
            let matrices: Vec<ConfusionMatrix> = scenes
                .par_iter()
                .zip(&oracles)
                .enumerate()
                .map(|(i, (scene, oracle))| {
                    let image_id = format!("scene_{i:03}");
                    let refined =
                        config.refine(&scene.prediction, &scene.base_p, oracle, &image_id)?;
                    let mut cm = ConfusionMatrix::new(num_classes);
                    cm.accumulate(&refined.prediction, &scene.truth, ignore_label)?;
                    Ok(cm)
                })
                .collect::<Result<_, MetricsError>>()?;
            let mut total = ConfusionMatrix::new(num_classes);
            for cm in &matrices {
                total.merge(cm)?;
            }
            let echo = serde_json::to_value(config).expect("config serializes");
            Ok(AblationRow {
                name: name.clone(),
                report: EvalReport::new(&total, echo),
            })
        })
        .collect()
}

/// Fixed-width text rendering: one row per configuration.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let name_width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<name_width$}  {:>7}  {:>8}  {:>6}  {:>7}\n",
        "config", "ENHANCE", "w/filter", "w/sort", "mIoU"
    );
    let mark = |b: bool| if b { "x" } else { "-" };
    for row in rows {
        let flag = |key: &str| {
            row.report
                .config
                .get(key)
                .and_then(|v| v.as_bool())
                .unwrap_or(false)
        };
        let miou = row
            .miou()
            .map(|m| format!("{:.2}", m * 100.0))
            .unwrap_or_else(|| "n/a".into());
        out.push_str(&format!(
            "{:<name_width$}  {:>7}  {:>8}  {:>6}  {:>7}\n",
            row.name,
            mark(flag("enhance")),
            mark(flag("use_filter")),
            mark(flag("use_sort")),
            miou
        ));
    }
    out
}
