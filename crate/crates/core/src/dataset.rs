//! Grounding datasets: Toloka-style CSV/JSONL ingestion, GQA scene-graph
//! conversion, seeded train/val splits and paraphrase augmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Mode, Warning};
use crate::error::{Error, Result};
use crate::geometry::{clip_box, BBox, ImageSize};

/// One question-image pair, optionally labeled with the box containing the
/// visual answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingInstance {
    pub sample_id: String,
    pub image_ref: String,
    pub image_size: ImageSize,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<BBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paraphrases: Vec<String>,
}

/// Instances read from a file, in file order, plus anything that was
/// repaired or skipped along the way.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub instances: Vec<GroundingInstance>,
    pub warnings: Vec<Warning>,
}

/// Toloka CSV row: `image,width,height,left,top,right,bottom,question` with
/// an optional `sample_id` column. Without one, ids are the 0-based row index.
#[derive(Debug, Deserialize)]
struct CsvRow {
    #[serde(default)]
    sample_id: Option<String>,
    image: String,
    width: u32,
    height: u32,
    #[serde(default)]
    left: Option<f64>,
    #[serde(default)]
    top: Option<f64>,
    #[serde(default)]
    right: Option<f64>,
    #[serde(default)]
    bottom: Option<f64>,
    question: String,
}

/// Reads a grounding file; `.csv` files use the Toloka column layout, all
/// other extensions are read as JSONL.
pub fn load_grounding_dataset(path: impl AsRef<Path>, mode: Mode) -> Result<Loaded> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_grounding_csv(file, mode)
    } else {
        read_grounding_jsonl(BufReader::new(file), mode)
    }
}

pub fn read_grounding_jsonl<R: BufRead>(reader: R, mode: Mode) -> Result<Loaded> {
    let mut acc = Accumulator::new(mode);
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<GroundingInstance>(&line)
            .map_err(|e| e.to_string())
            .and_then(|inst| validate_instance(inst, line_no, &mut acc.warnings));
        acc.push(line_no, parsed)?;
    }
    Ok(acc.finish())
}

pub fn read_grounding_csv<R: Read>(reader: R, mode: Mode) -> Result<Loaded> {
    let mut acc = Accumulator::new(mode);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    for (idx, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line_no = idx + 2;
        let parsed = row
            .map_err(|e| e.to_string())
            .and_then(|r| csv_row_to_instance(r, idx))
            .and_then(|inst| validate_instance(inst, line_no, &mut acc.warnings));
        acc.push(line_no, parsed)?;
    }
    Ok(acc.finish())
}

fn csv_row_to_instance(r: CsvRow, idx: usize) -> std::result::Result<GroundingInstance, String> {
    let image_size = ImageSize::new(r.width, r.height).map_err(|e| e.to_string())?;
    let gt_box = match (r.left, r.top, r.right, r.bottom) {
        (Some(x1), Some(y1), Some(x2), Some(y2)) => {
            Some(BBox::new(x1, y1, x2, y2).map_err(|e| e.to_string())?)
        }
        (None, None, None, None) => None,
        _ => return Err("box columns must be all present or all empty".into()),
    };
    Ok(GroundingInstance {
        sample_id: r
            .sample_id
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| idx.to_string()),
        image_ref: r.image,
        image_size,
        question: r.question,
        gt_box,
        paraphrases: Vec::new(),
    })
}

fn validate_instance(
    mut inst: GroundingInstance,
    line: usize,
    warnings: &mut Vec<Warning>,
) -> std::result::Result<GroundingInstance, String> {
    if inst.question.trim().is_empty() {
        return Err("question is empty".into());
    }
    if inst.sample_id.is_empty() {
        return Err("sample_id is empty".into());
    }
    if let Some(b) = inst.gt_box {
        if !inst.image_size.contains(&b) {
            let clipped = clip_box(&b, inst.image_size);
            warnings.push(Warning::at_line(
                line,
                format!(
                    "box {:?} clipped to {}x{} image as {:?}",
                    b.to_array(),
                    inst.image_size.width(),
                    inst.image_size.height(),
                    clipped.to_array()
                ),
            ));
            inst.gt_box = Some(clipped);
        }
    }
    Ok(inst)
}

struct Accumulator {
    mode: Mode,
    by_id: IndexMap<String, GroundingInstance>,
    warnings: Vec<Warning>,
}

impl Accumulator {
    fn new(mode: Mode) -> Self {
        Self {
            mode,
            by_id: IndexMap::new(),
            warnings: Vec::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        parsed: std::result::Result<GroundingInstance, String>,
    ) -> Result<()> {
        let inst = match parsed {
            Ok(inst) => inst,
            Err(message) => match self.mode {
                Mode::Strict => return Err(Error::Parse { line, message }),
                Mode::Lenient => {
                    self.warnings.push(Warning::at_line(
                        line,
                        format!("skipped malformed row: {message}"),
                    ));
                    return Ok(());
                }
            },
        };
        if self.by_id.contains_key(&inst.sample_id) {
            if self.mode == Mode::Strict {
                return Err(Error::DuplicateSample {
                    line,
                    sample_id: inst.sample_id,
                });
            }
            self.warnings.push(Warning::at_line(
                line,
                format!("duplicate sample_id `{}`; keeping this row", inst.sample_id),
            ));
        }
        self.by_id.insert(inst.sample_id.clone(), inst);
        Ok(())
    }

    fn finish(self) -> Loaded {
        Loaded {
            instances: self.by_id.into_values().collect(),
            warnings: self.warnings,
        }
    }
}

/// Writes canonical grounding JSONL, one instance per line.
pub fn write_grounding_jsonl<W: Write>(
    mut writer: W,
    instances: &[GroundingInstance],
) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(inst).map_err(|e| Error::io("<jsonl>", e))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<jsonl>", e))
}

// ---------------------------------------------------------------------------
// GQA

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraphObject {
    pub object_id: String,
    pub name: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub image_id: String,
    pub size: ImageSize,
    pub objects: BTreeMap<String, SceneGraphObject>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GqaQuestionRecord {
    pub question_id: String,
    pub image_id: String,
    pub text: String,
    /// Distinct objects the answer refers to, falling back to the question's
    /// objects when the answer carries no annotation.
    pub grounded_object_ids: Vec<String>,
}

#[derive(Deserialize)]
struct RawGraph {
    width: u32,
    height: u32,
    #[serde(default)]
    objects: BTreeMap<String, RawObject>,
}

#[derive(Deserialize)]
struct RawObject {
    #[serde(default)]
    name: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawQuestion {
    image_id: String,
    question: String,
    #[serde(default)]
    annotations: RawAnnotations,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct RawAnnotations {
    #[serde(default)]
    question: BTreeMap<String, String>,
    #[serde(default)]
    answer: BTreeMap<String, String>,
}

/// Parses a GQA scene-graph file: `{image_id: {width, height, objects:
/// {object_id: {name, x, y, w, h, ..}}}}`. Object boxes are clipped to the
/// image.
pub fn parse_scene_graphs<R: Read>(reader: R) -> Result<BTreeMap<String, SceneGraph>> {
    let raw: BTreeMap<String, RawGraph> =
        serde_json::from_reader(reader).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("scene graphs: {e}"),
        })?;
    let mut out = BTreeMap::new();
    for (image_id, g) in raw {
        let size = ImageSize::new(g.width, g.height)?;
        let mut objects = BTreeMap::new();
        for (object_id, o) in g.objects {
            let bbox = BBox::from_xywh(o.x, o.y, o.w, o.h).map_err(|e| Error::Parse {
                line: 0,
                message: format!("image {image_id} object {object_id}: {e}"),
            })?;
            objects.insert(
                object_id.clone(),
                SceneGraphObject {
                    object_id,
                    name: o.name,
                    bbox: clip_box(&bbox, size),
                },
            );
        }
        out.insert(
            image_id.clone(),
            SceneGraph {
                image_id,
                size,
                objects,
            },
        );
    }
    Ok(out)
}

/// Parses a GQA question file: `{question_id: {imageId, question,
/// annotations: {question: {span: object_id}, answer: {..}}}}`.
pub fn parse_questions<R: Read>(reader: R) -> Result<Vec<GqaQuestionRecord>> {
    let raw: BTreeMap<String, RawQuestion> =
        serde_json::from_reader(reader).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("questions: {e}"),
        })?;
    let mut out = Vec::with_capacity(raw.len());
    for (question_id, q) in raw {
        if q.question.trim().is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: format!("question {question_id} has empty text"),
            });
        }
        let source = if q.annotations.answer.is_empty() {
            &q.annotations.question
        } else {
            &q.annotations.answer
        };
        let ids: BTreeSet<&String> = source.values().collect();
        out.push(GqaQuestionRecord {
            question_id,
            image_id: q.image_id,
            text: q.question,
            grounded_object_ids: ids.into_iter().cloned().collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GqaSummary {
    pub questions: usize,
    pub retained: usize,
    /// Questions grounded to two or more objects.
    pub dropped_ambiguous: usize,
    /// Questions with no object annotation at all.
    pub dropped_ungrounded: usize,
    /// Single-object questions whose image or object is missing.
    pub dangling: usize,
    /// Distinct images among retained questions.
    pub images: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GqaConversion {
    pub instances: Vec<GroundingInstance>,
    pub summary: GqaSummary,
    pub warnings: Vec<Warning>,
}

/// Keeps the questions grounded to exactly one scene-graph object and emits
/// that object's box as the target, sorted by question id.
pub fn convert_gqa(
    graphs: &BTreeMap<String, SceneGraph>,
    questions: &[GqaQuestionRecord],
) -> GqaConversion {
    let mut sorted: Vec<&GqaQuestionRecord> = questions.iter().collect();
    sorted.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let mut conv = GqaConversion::default();
    conv.summary.questions = questions.len();
    let mut images = BTreeSet::new();
    for q in sorted {
        let object_id = match q.grounded_object_ids.as_slice() {
            [] => {
                conv.summary.dropped_ungrounded += 1;
                continue;
            }
            [only] => only,
            _ => {
                conv.summary.dropped_ambiguous += 1;
                continue;
            }
        };
        let Some(graph) = graphs.get(&q.image_id) else {
            conv.summary.dangling += 1;
            conv.warnings.push(Warning::for_sample(
                &q.question_id,
                format!("image `{}` has no scene graph", q.image_id),
            ));
            continue;
        };
        let Some(obj) = graph.objects.get(object_id) else {
            conv.summary.dangling += 1;
            conv.warnings.push(Warning::for_sample(
                &q.question_id,
                format!(
                    "object `{object_id}` not found in scene graph of image `{}`",
                    q.image_id
                ),
            ));
            continue;
        };
        images.insert(q.image_id.as_str());
        conv.instances.push(GroundingInstance {
            sample_id: q.question_id.clone(),
            image_ref: format!("{}.jpg", q.image_id),
            image_size: graph.size,
            question: q.text.clone(),
            gt_box: Some(obj.bbox),
            paraphrases: Vec::new(),
        });
    }
    conv.summary.retained = conv.instances.len();
    conv.summary.images = images.len();
    conv
}

/// Deterministic generator for every seeded operation in the toolkit.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shuffles under `seed` and sends the last `val_count` shuffled items to
/// validation. Both parts keep the input's relative order.
pub fn split_dataset<T>(items: Vec<T>, val_count: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let total = items.len();
    if val_count > total {
        return Err(Error::ValCountTooLarge { val_count, total });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut is_val = vec![false; total];
    for &i in &order[total - val_count..] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (
        Vec::with_capacity(total - val_count),
        Vec::with_capacity(val_count),
    );
    for (item, v) in items.into_iter().zip(is_val) {
        if v {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(Error::InvalidParaphraseProbability(p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// With probability `p` returns a uniformly chosen paraphrase, otherwise the
/// original question. Instances without paraphrases always return the
/// original. One coin is drawn per call regardless of the outcome, and one
/// index more when a paraphrase is chosen.
pub fn paraphrase_pick<'a, R: Rng + ?Sized>(
    inst: &'a GroundingInstance,
    p: Probability,
    rng: &mut R,
) -> &'a str {
    let coin: f64 = rng.gen();
    if coin < p.0 && !inst.paraphrases.is_empty() {
        let k = rng.gen_range(0..inst.paraphrases.len());
        &inst.paraphrases[k]
    } else {
        &inst.question
    }
}
