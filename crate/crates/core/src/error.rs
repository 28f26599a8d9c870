use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite box coordinate in ({0}, {1}, {2}, {3})")]
    NonFiniteBox(f64, f64, f64, f64),
    #[error("inverted box: x1={x1} x2={x2} y1={y1} y2={y2}")]
    InvertedBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("image size must be at least 1x1, got {width}x{height}")]
    InvalidImageSize { width: u32, height: u32 },
    #[error("invalid augmentation: {0}")]
    InvalidAugmentation(String),
    #[error("box ({x1}, {y1}, {x2}, {y2}) lies outside the {width}x{height} frame")]
    OutOfBounds {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: f64,
        height: f64,
    },
    #[error("score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("candidate set `{0}` is empty")]
    EmptyCandidates(String),
    #[error("stride must be positive, got {0}")]
    InvalidStride(i64),
    #[error("mask shape mismatch: pred stride {pred_stride} {pred_w}x{pred_h}, target stride {target_stride} {target_w}x{target_h}")]
    ShapeMismatch {
        pred_stride: u32,
        pred_w: usize,
        pred_h: usize,
        target_stride: u32,
        target_w: usize,
        target_h: usize,
    },
    #[error("no prediction supplied for stride {0}")]
    MissingStride(u32),
    #[error("more than one prediction supplied for stride {0}")]
    DuplicateStride(u32),
    #[error("prediction supplied for unexpected stride {0}")]
    UnexpectedStride(u32),
    #[error("probability cell value {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid loss config: {0}")]
    InvalidLossConfig(String),
    #[error("non-finite loss value {0}")]
    NonFiniteLoss(f64),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate sample_id `{sample_id}`")]
    DuplicateSample { line: usize, sample_id: String },
    #[error("sample `{0}` has no ground-truth box")]
    MissingGroundTruth(String),
    #[error(
        "reports cover different sample sets ({only_a} only in first, {only_b} only in second)"
    )]
    SampleSetMismatch { only_a: usize, only_b: usize },
    #[error("validation count {val_count} exceeds dataset size {total}")]
    ValCountTooLarge { val_count: usize, total: usize },
    #[error("probability {0} is outside [0, 1]")]
    InvalidParaphraseProbability(f64),
    #[error("invalid mask grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
