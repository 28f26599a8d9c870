use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use groundkit::records::Frame;
use groundkit::Mode;

#[derive(Debug, Parser)]
#[command(
    name = "groundkit",
    version,
    about = "Visual grounding TTA, evaluation and dataset tools"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct GlobalOpts {
    /// Abort on the first malformed row (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    pub strict: bool,

    /// Skip malformed rows and resolve duplicates last-wins, with warnings.
    #[arg(long, global = true)]
    pub lenient: bool,

    /// Worker threads for per-sample work; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

impl GlobalOpts {
    pub fn mode(&self) -> Mode {
        if self.lenient {
            Mode::Lenient
        } else {
            Mode::Strict
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select one box per sample from per-augmentation predictions.
    TtaMerge {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frame the prediction boxes are expressed in.
        #[arg(long, default_value = "augmented")]
        frame: Frame,
    },
    /// Score predictions against ground truth with mean IoU.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Per-sample IoU deltas between two evaluation reports.
    Compare {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build grounding instances from GQA scene graphs and questions.
    ConvertGqa {
        #[arg(long)]
        scene_graphs: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Training split (or everything when --val-count is 0).
        #[arg(long)]
        out: PathBuf,
        /// Validation split; defaults to `<out stem>.val.jsonl`.
        #[arg(long)]
        val_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        val_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rasterize ground-truth boxes into stride-aligned mask grids.
    GenMasks {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        strides: Vec<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace questions with paraphrases at a fixed probability.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the test-time augmentation specs to run for each sample.
    TtaSpecs {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated `short:cap` scales.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "600:1333,800:1333,1000:1333"
        )]
        scales: Vec<String>,
        /// Skip the flipped variants.
        #[arg(long)]
        no_flip: bool,
    },
}
