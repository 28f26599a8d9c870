//! Line-oriented file formats shared by the command-line tools.
//!
//! Every format is JSONL with one record per line. Reals are written with
//! at most six fractional digits.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Mode, Warning};
use crate::error::{Error, Result};
use crate::geometry::{
    clip_box, clip_to_augmented, detransform_box, AugmentationSpec, BBox, ImageSize,
};
use crate::number;
use crate::tta::{Prediction, TtaResult};

/// Coordinate frame a prediction row is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// The resized (and possibly flipped) image the detector saw.
    Augmented,
    /// The original image.
    Original,
}

impl std::str::FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "augmented" => Ok(Frame::Augmented),
            "original" => Ok(Frame::Original),
            other => Err(format!(
                "unknown frame `{other}` (expected augmented|original)"
            )),
        }
    }
}

/// One top-1 detection under one augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    #[serde(flatten)]
    pub bbox: BBox,
    #[serde(serialize_with = "number::serialize")]
    pub score: f64,
    pub aug: AugmentationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Frame>,
}

impl PredictionRecord {
    /// Maps the row into the original image frame. Rows without an explicit
    /// `frame` take `expected`; rows declaring a different frame are
    /// rejected. Boxes are clipped to the frame they are expressed in before
    /// any inverse transform.
    pub fn to_prediction(&self, expected: Frame) -> Result<Prediction> {
        let frame = self.frame.unwrap_or(expected);
        if frame != expected {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "sample `{}` row is in the {frame:?} frame but {expected:?} was requested",
                    self.sample_id
                ),
            });
        }
        let original = match frame {
            Frame::Augmented => {
                detransform_box(&clip_to_augmented(&self.bbox, &self.aug), &self.aug)?
            }
            Frame::Original => clip_box(&self.bbox, self.aug.original()),
        };
        Prediction::new(original, self.score, self.aug)
    }
}

/// One merged output row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRecord {
    pub sample_id: String,
    #[serde(flatten)]
    pub bbox: BBox,
    #[serde(serialize_with = "number::serialize")]
    pub score: f64,
    #[serde(serialize_with = "number::serialize")]
    pub corrected_score: f64,
    pub winner_index: usize,
    pub candidates: usize,
    pub aug: AugmentationSpec,
}

impl MergedRecord {
    pub fn from_result(sample_id: &str, r: &TtaResult) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            bbox: r.final_box,
            score: r.final_score,
            corrected_score: r.corrected_scores[r.winner_index],
            winner_index: r.winner_index,
            candidates: r.corrected_scores.len(),
            aug: r.winner_source,
        }
    }
}

/// Augmentations to run for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub sample_id: String,
    pub augmentations: Vec<AugmentationSpec>,
}

/// A parsed row together with its 1-based line number.
pub type Numbered<T> = (usize, T);

/// Reads JSONL records of type `T`, skipping blank lines. Malformed rows are
/// fatal in strict mode and become warnings in lenient mode.
pub fn read_jsonl<T, R>(reader: R, mode: Mode) -> Result<(Vec<Numbered<T>>, Vec<Warning>)>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => rows.push((line_no, v)),
            Err(e) => match mode {
                Mode::Strict => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })
                }
                Mode::Lenient => warnings.push(Warning::at_line(
                    line_no,
                    format!("skipped malformed row: {e}"),
                )),
            },
        }
    }
    Ok((rows, warnings))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, rows: &[T]) -> Result<()> {
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::io("<jsonl>", e))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<jsonl>", e))
}

/// A scored box: either a flat `x1,y1,x2,y2` row (merged output) or a
/// grounding instance carrying `gt_box`.
#[derive(Debug, Clone, Deserialize)]
pub struct BoxRow {
    pub sample_id: String,
    #[serde(flatten)]
    flat: Option<BBox>,
    #[serde(default)]
    gt_box: Option<BBox>,
    #[serde(default)]
    image_size: Option<ImageSize>,
}

impl BoxRow {
    /// The row's box, clipped to `image_size` when the row carries one.
    pub fn bbox(&self) -> Option<BBox> {
        let b = self.flat.or(self.gt_box)?;
        Some(match self.image_size {
            Some(size) => clip_box(&b, size),
            None => b,
        })
    }
}

/// `(sample_id, box)` pairs plus ingestion warnings.
pub type BoxPredictions = (Vec<(String, BBox)>, Vec<Warning>);

/// Reads `(sample_id, box)` pairs for scoring.
pub fn read_box_predictions<R: BufRead>(reader: R, mode: Mode) -> Result<BoxPredictions> {
    let (rows, mut warnings) = read_jsonl::<BoxRow, _>(reader, mode)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        match row.bbox() {
            Some(b) => out.push((row.sample_id, b)),
            None => match mode {
                Mode::Strict => {
                    return Err(Error::Parse {
                        line,
                        message: "row carries no box".into(),
                    })
                }
                Mode::Lenient => warnings.push(Warning::at_line(line, "skipped row without a box")),
            },
        }
    }
    Ok((out, warnings))
}
