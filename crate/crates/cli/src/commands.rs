use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use groundkit::auxloss::rasterize_box;
use groundkit::dataset::{
    self, convert_gqa, paraphrase_pick, seeded_rng, split_dataset, write_grounding_jsonl,
    GroundingInstance, Probability,
};
use groundkit::eval::{compare_reports, evaluate, EvalReport};
use groundkit::records::{
    read_box_predictions, read_jsonl, write_jsonl, Frame, MergedRecord, PredictionRecord,
    SpecRecord,
};
use groundkit::tta::{tta_merge_batch, CandidateSet, Prediction};
use groundkit::{AugmentationSpec, Error, Mode, Warning};
use log::warn;

use crate::args::{Cli, Command, GlobalOpts};
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult {
    let g = cli.global;
    match cli.command {
        Command::TtaMerge {
            predictions,
            out,
            frame,
        } => tta_merge(&g, &predictions, &out, frame),
        Command::Evaluate {
            predictions,
            truth,
            report,
        } => evaluate_cmd(&g, &predictions, &truth, &report),
        Command::Compare {
            base,
            candidate,
            out,
        } => compare(&base, &candidate, out.as_deref()),
        Command::ConvertGqa {
            scene_graphs,
            questions,
            out,
            val_out,
            val_count,
            seed,
        } => convert_gqa_cmd(&scene_graphs, &questions, &out, val_out, val_count, seed),
        Command::GenMasks {
            truth,
            strides,
            out,
        } => gen_masks(&g, &truth, &strides, &out),
        Command::Augment {
            dataset,
            p,
            seed,
            out,
        } => augment(&g, &dataset, p, seed, &out),
        Command::TtaSpecs {
            dataset,
            out,
            scales,
            no_flip,
        } => tta_specs(&g, &dataset, &out, &scales, no_flip),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn jsonl_bytes<T: serde::Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, rows)?;
    Ok(buf)
}

fn report_warnings(warnings: &[Warning]) {
    for w in warnings {
        warn!("{w}");
    }
}

fn load_dataset(path: &Path, mode: Mode) -> CliResult<Vec<GroundingInstance>> {
    let loaded = dataset::load_grounding_dataset(path, mode)?;
    report_warnings(&loaded.warnings);
    Ok(loaded.instances)
}

/// Groups prediction rows by sample id (file order within a sample), maps
/// them into the original frame and runs consensus selection per sample.
pub fn tta_merge(g: &GlobalOpts, predictions: &Path, out: &Path, frame: Frame) -> CliResult {
    let mode = g.mode();
    let (rows, warnings) = read_jsonl::<PredictionRecord, _>(open(predictions)?, mode)?;
    report_warnings(&warnings);

    let mut groups: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for (line, rec) in &rows {
        match rec.to_prediction(frame) {
            Ok(p) => groups.entry(rec.sample_id.clone()).or_default().push(p),
            Err(e) => match mode {
                Mode::Strict => {
                    return Err(Error::Parse {
                        line: *line,
                        message: e.to_string(),
                    }
                    .into())
                }
                Mode::Lenient => warn!("line {line}: skipped prediction: {e}"),
            },
        }
    }
    let n_rows: usize = groups.values().map(Vec::len).sum();
    let sets = groups
        .into_iter()
        .map(|(id, preds)| CandidateSet::new(id, preds));
    let outcome = tta_merge_batch(sets, g.workers)?;
    for (id, e) in &outcome.failures {
        warn!("sample `{id}`: {e}");
    }
    let merged: Vec<MergedRecord> = outcome
        .results
        .iter()
        .map(|(id, r)| MergedRecord::from_result(id, r))
        .collect();
    write_file(out, &jsonl_bytes(&merged)?)?;
    println!(
        "merged {} samples from {} predictions ({} failed)",
        merged.len(),
        n_rows,
        outcome.failures.len()
    );
    Ok(())
}

pub fn evaluate_cmd(g: &GlobalOpts, predictions: &Path, truth: &Path, report: &Path) -> CliResult {
    let mode = g.mode();
    let truths = load_dataset(truth, mode)?;
    let (preds, warnings) = read_box_predictions(open(predictions)?, mode)?;
    report_warnings(&warnings);
    let ev = evaluate(preds, truths, mode, g.workers)?;
    report_warnings(&ev.warnings);
    let mut json = serde_json::to_vec_pretty(&ev.report).map_err(|e| io_error(report, e))?;
    json.push(b'\n');
    write_file(report, &json)?;
    print!("{}", ev.report.text_summary());
    Ok(())
}

fn read_report(path: &Path) -> CliResult<EvalReport> {
    serde_json::from_reader(open(path)?).map_err(|e| io_error(path, e))
}

pub fn compare(base: &Path, candidate: &Path, out: Option<&Path>) -> CliResult {
    let delta = compare_reports(&read_report(base)?, &read_report(candidate)?)?;
    if let Some(out) = out {
        let mut json = serde_json::to_vec_pretty(&delta).map_err(|e| io_error(out, e))?;
        json.push(b'\n');
        write_file(out, &json)?;
    }
    println!("{:<24}{:>+12.6}", "mean_delta", delta.mean_delta);
    println!("{:<24}{:>12}", "improved", delta.improved);
    println!("{:<24}{:>12}", "regressed", delta.regressed);
    println!("{:<24}{:>12}", "unchanged", delta.unchanged);
    Ok(())
}

fn default_val_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.val.jsonl"))
}

pub fn convert_gqa_cmd(
    scene_graphs: &Path,
    questions: &Path,
    out: &Path,
    val_out: Option<PathBuf>,
    val_count: usize,
    seed: u64,
) -> CliResult {
    let graphs = dataset::parse_scene_graphs(open(scene_graphs)?)?;
    let qs = dataset::parse_questions(open(questions)?)?;
    let conv = convert_gqa(&graphs, &qs);
    report_warnings(&conv.warnings);
    let (train, val) = split_dataset(conv.instances, val_count, seed)?;

    let mut train_bytes = Vec::new();
    write_grounding_jsonl(&mut train_bytes, &train)?;
    let val_bytes = if val_count > 0 {
        let mut buf = Vec::new();
        write_grounding_jsonl(&mut buf, &val)?;
        Some(buf)
    } else {
        None
    };
    write_file(out, &train_bytes)?;
    if let Some(bytes) = val_bytes {
        write_file(&val_out.unwrap_or_else(|| default_val_path(out)), &bytes)?;
    }
    let s = &conv.summary;
    println!("images              {}", s.images);
    println!("questions           {}", s.questions);
    println!("retained            {}", s.retained);
    println!("dropped_ambiguous   {}", s.dropped_ambiguous);
    println!("dropped_ungrounded  {}", s.dropped_ungrounded);
    println!("dangling            {}", s.dangling);
    println!("train               {}", train.len());
    println!("val                 {}", val.len());
    Ok(())
}

/// File-name-safe form of a sample id.
fn file_stem_for(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn gen_masks(g: &GlobalOpts, truth: &Path, strides: &[i64], out: &Path) -> CliResult {
    if let Some(&bad) = strides.iter().find(|&&s| s <= 0) {
        return Err(CliError::Usage(format!(
            "stride must be positive, got {bad}"
        )));
    }
    let instances = load_dataset(truth, g.mode())?;
    let mut grids = Vec::new();
    for inst in &instances {
        let Some(b) = inst.gt_box else {
            let e = Error::MissingGroundTruth(inst.sample_id.clone());
            match g.mode() {
                Mode::Strict => return Err(e.into()),
                Mode::Lenient => {
                    warn!("{e}; skipped");
                    continue;
                }
            }
        };
        for &stride in strides {
            let mask = rasterize_box(&b, inst.image_size, stride)?;
            let name = format!("{}.s{stride}.grid", file_stem_for(&inst.sample_id));
            grids.push((name, mask.to_grid_string()));
        }
    }
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    for (name, text) in &grids {
        write_file(&out.join(name), text.as_bytes())?;
    }
    println!(
        "wrote {} grids for {} samples",
        grids.len(),
        grids.len() / strides.len().max(1)
    );
    Ok(())
}

pub fn augment(g: &GlobalOpts, dataset: &Path, p: f64, seed: u64, out: &Path) -> CliResult {
    let p = Probability::new(p).map_err(|e| CliError::Usage(e.to_string()))?;
    let instances = load_dataset(dataset, g.mode())?;
    let mut rng = seeded_rng(seed);
    let mut replaced = 0usize;
    let rewritten: Vec<GroundingInstance> = instances
        .iter()
        .map(|inst| {
            let q = paraphrase_pick(inst, p, &mut rng);
            if q != inst.question {
                replaced += 1;
            }
            GroundingInstance {
                question: q.to_string(),
                ..inst.clone()
            }
        })
        .collect();
    let mut buf = Vec::new();
    write_grounding_jsonl(&mut buf, &rewritten)?;
    write_file(out, &buf)?;
    println!("rewrote {replaced} of {} questions", rewritten.len());
    Ok(())
}

fn parse_scales(scales: &[String]) -> CliResult<Vec<(u32, u32)>> {
    scales
        .iter()
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("scale `{s}` is not `short:cap`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|e| CliError::Usage(format!("scale `{s}`: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

pub fn tta_specs(
    g: &GlobalOpts,
    dataset: &Path,
    out: &Path,
    scales: &[String],
    no_flip: bool,
) -> CliResult {
    let scales = parse_scales(scales)?;
    let flips: &[bool] = if no_flip { &[false] } else { &[false, true] };
    let instances = load_dataset(dataset, g.mode())?;
    let rows = instances
        .iter()
        .map(|inst| {
            AugmentationSpec::grid(inst.image_size, &scales, flips).map(|augmentations| {
                SpecRecord {
                    sample_id: inst.sample_id.clone(),
                    augmentations,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(out, &jsonl_bytes(&rows)?)?;
    println!("wrote specs for {} samples", rows.len());
    Ok(())
}
