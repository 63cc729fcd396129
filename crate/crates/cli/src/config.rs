//! Effective pipeline configuration: built-in defaults, then a JSON config
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use anchor_refine::config::RefineConfig;
use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "ANCHOR_REFINE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Manifest,
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub w: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta: usize,
    pub k: usize,
    pub seed: u64,
    pub enhance: bool,
    pub use_filter: bool,
    pub use_sort: bool,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub manifest: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub chunk_size: usize,
    pub ignore_label: Option<u8>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let r = RefineConfig::default();
        Self {
            w: r.w,
            tau: r.tau,
            alpha: r.alpha,
            beta: r.beta,
            k: r.k,
            seed: r.seed,
            enhance: r.enhance,
            use_filter: r.use_filter,
            use_sort: r.use_sort,
            backend: BackendKind::Manifest,
            endpoint: None,
            manifest: None,
            scene: None,
            chunk_size: 64,
            ignore_label: None,
        }
    }
}

impl PipelineConfig {
    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            w: self.w,
            tau: self.tau,
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
            seed: self.seed,
            enhance: self.enhance,
            use_filter: self.use_filter,
            use_sort: self.use_sort,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.refine_config().validate()?;
        if self.chunk_size == 0 {
            bail!("chunk_size must be at least 1");
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every command that runs part of the pipeline.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// JSON config file (falls back to $ANCHOR_REFINE_CONFIG)
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Region filter window width (odd)
    #[arg(long)]
    pub w: Option<usize>,
    /// Entropy threshold in nats
    #[arg(long)]
    pub tau: Option<f64>,
    /// Minimum mask score
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Maximum mask area in pixels
    #[arg(long)]
    pub beta: Option<usize>,
    /// Number of anchors to sample
    #[arg(long = "anchors")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_enhance: bool,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub no_sort: bool,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Base URL of the segmentation service
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Manifest JSON for replayed masks
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Scene JSON for the mock oracle
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Anchors per HTTP request
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub ignore_label: Option<u8>,
}

impl ConfigFlags {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v; })*
            };
        }
        apply!(w => w, tau => tau, alpha => alpha, beta => beta, k => k, seed => seed,
               backend => backend, chunk_size => chunk_size);
        if let Some(v) = &self.endpoint {
            c.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.manifest {
            c.manifest = Some(v.clone());
        }
        if let Some(v) = &self.scene {
            c.scene = Some(v.clone());
        }
        if let Some(v) = self.ignore_label {
            c.ignore_label = Some(v);
        }
        if self.no_enhance {
            c.enhance = false;
        }
        if self.no_filter {
            c.use_filter = false;
        }
        if self.no_sort {
            c.use_sort = false;
        }
        c.validate()?;
        Ok(c)
    }
}
