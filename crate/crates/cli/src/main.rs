//! `anchor-refine`: command-line front end for the refinement pipeline.
//!
//! Exit status: 0 on success, 1 for invalid input or configuration, 2 for
//! I/O and segmenter backend failures. Diagnostics go to stderr; machine
//! output goes to files only.

mod commands;
mod config;
mod output;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigFlags;

#[derive(Debug, Parser)]
#[command(
    name = "anchor-refine",
    version,
    about = "Entropy-anchored segmentation refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-pixel entropy of a probability tensor (PTM1 in, ENT1 out)
    Entropy { prob: PathBuf, out: PathBuf },
    /// Mean-filter and threshold an entropy map into a high-entropy mask
    Regions {
        entropy: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Sample anchors from a region mask into a JSON list of [row, col]
    Anchors {
        region: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Refine a class map with masks from the configured backend
    Refine {
        pred: PathBuf,
        prob: PathBuf,
        out: PathBuf,
        /// Image id sent to the backend (defaults to the prediction's file stem)
        #[arg(long)]
        image_id: Option<String>,
        /// Write a JSON summary of the run here
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Score predictions against ground truth
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        truth: Vec<PathBuf>,
        #[arg(long)]
        num_classes: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Generate a batch of synthetic scenes
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Scene parameter JSON; unspecified fields keep their defaults
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the four ablation configurations over a scene directory
    Ablate {
        scene_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an aligned text table
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Blend a class map over a grayscale image (binary PPM out)
    Overlay {
        pred: PathBuf,
        base: PathBuf,
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Entropy { prob, out } => commands::entropy(&prob, &out),
        Command::Regions {
            entropy,
            out,
            flags,
        } => commands::regions(&entropy, &out, &flags),
        Command::Anchors { region, out, flags } => commands::anchors(&region, &out, &flags),
        Command::Refine {
            pred,
            prob,
            out,
            image_id,
            report,
            flags,
        } => commands::refine(&pred, &prob, &out, image_id, report.as_deref(), &flags),
        Command::Eval {
            pred,
            truth,
            num_classes,
            out,
            flags,
        } => commands::eval(&pred, &truth, num_classes, &out, &flags),
        Command::Synth {
            out_dir,
            seed,
            count,
            params,
        } => commands::synth(&out_dir, seed, count, params.as_deref()),
        Command::Ablate {
            scene_dir,
            out,
            table,
            flags,
        } => commands::ablate(&scene_dir, &out, table.as_deref(), &flags),
        Command::Overlay { pred, base, out } => overlay::run(&pred, &base, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
