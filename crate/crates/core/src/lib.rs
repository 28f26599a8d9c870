//! Toolkit for interrogative visual-grounding pipelines.
//!
//! * [`geometry`]: boxes, IoU, and resize/flip augmentation transforms.
//! * [`tta`]: IoU-consensus selection among per-augmentation top-1 boxes.
//! * [`auxloss`]: box rasterization, Dice losses and loss combination.
//! * [`dataset`]: grounding files, GQA conversion, splits, paraphrases.
//! * [`eval`]: mean-IoU scoring and report comparison.
//! * [`records`]: the JSONL formats shared by the command-line tools.

pub mod auxloss;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod number;
mod parallel;
pub mod records;
pub mod tta;

pub use diagnostics::{Mode, Warning};
pub use error::{Error, Result};
pub use geometry::{AugmentationSpec, BBox, ImageSize};
pub use tta::{CandidateSet, Prediction, TtaResult};
