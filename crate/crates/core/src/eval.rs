//! Mean-IoU scoring of predicted boxes against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundingInstance;
use crate::diagnostics::{Mode, Warning};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::number;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    #[serde(serialize_with = "number::serialize")]
    pub iou: f64,
}

/// Per-sample IoUs are sorted by sample id; missing predictions score 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(serialize_with = "number::serialize")]
    pub mean_iou: f64,
    pub ground_truth: usize,
    pub matched: usize,
    pub per_sample: Vec<SampleScore>,
    pub missing_predictions: Vec<String>,
    pub extra_predictions: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub warnings: Vec<Warning>,
}

/// Joins predictions to ground truth on sample id and averages IoU over the
/// ground-truth samples. Extra predictions are listed but never scored.
/// The result does not depend on input order or on `workers`.
pub fn evaluate<P, T>(predictions: P, truths: T, mode: Mode, workers: usize) -> Result<Evaluation>
where
    P: IntoIterator<Item = (String, BBox)>,
    T: IntoIterator<Item = GroundingInstance>,
{
    let mut warnings = Vec::new();
    let mut preds: BTreeMap<String, BBox> = BTreeMap::new();
    for (id, b) in predictions {
        if preds.contains_key(&id) {
            if mode == Mode::Strict {
                return Err(Error::DuplicateSample {
                    line: 0,
                    sample_id: id,
                });
            }
            warnings.push(Warning::for_sample(
                &id,
                "duplicate prediction; keeping the last",
            ));
        }
        preds.insert(id, b);
    }

    let mut gt: BTreeMap<String, BBox> = BTreeMap::new();
    for inst in truths {
        let b = inst
            .gt_box
            .ok_or_else(|| Error::MissingGroundTruth(inst.sample_id.clone()))?;
        if gt.insert(inst.sample_id.clone(), b).is_some() {
            if mode == Mode::Strict {
                return Err(Error::DuplicateSample {
                    line: 0,
                    sample_id: inst.sample_id,
                });
            }
            warnings.push(Warning::for_sample(
                &inst.sample_id,
                "duplicate ground truth; keeping the last",
            ));
        }
    }

    let truth_list: Vec<(&String, &BBox)> = gt.iter().collect();
    let scored: Vec<(f64, bool)> = crate::parallel::install(workers, || {
        truth_list
            .par_iter()
            .map(|(id, t)| match preds.get(*id) {
                Some(p) => (iou(p, t), true),
                None => (0.0, false),
            })
            .collect()
    })?;

    let mut per_sample = Vec::with_capacity(gt.len());
    let mut missing = Vec::new();
    let mut sum = 0.0;
    for ((id, _), (v, found)) in truth_list.iter().zip(&scored) {
        sum += v;
        if !found {
            missing.push((*id).clone());
        }
        per_sample.push(SampleScore {
            sample_id: (*id).clone(),
            iou: *v,
        });
    }
    let extra: Vec<String> = preds
        .keys()
        .filter(|id| !gt.contains_key(*id))
        .cloned()
        .collect();
    let n = gt.len();
    let report = EvalReport {
        mean_iou: if n == 0 { 0.0 } else { sum / n as f64 },
        ground_truth: n,
        matched: n - missing.len(),
        per_sample,
        missing_predictions: missing,
        extra_predictions: extra,
    };
    Ok(Evaluation { report, warnings })
}

impl EvalReport {
    /// Fixed-width, human-readable summary.
    pub fn text_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>12.6}", "mean_iou", self.mean_iou);
        let _ = writeln!(s, "{:<24}{:>12}", "ground_truth", self.ground_truth);
        let _ = writeln!(s, "{:<24}{:>12}", "matched", self.matched);
        let _ = writeln!(
            s,
            "{:<24}{:>12}",
            "missing_predictions",
            self.missing_predictions.len()
        );
        let _ = writeln!(
            s,
            "{:<24}{:>12}",
            "extra_predictions",
            self.extra_predictions.len()
        );
        s
    }
}

/// Per-sample movement between two reports over the same ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDelta {
    /// `b - a` per sample, sorted by sample id.
    pub per_sample: Vec<SampleScore>,
    #[serde(serialize_with = "number::serialize")]
    pub mean_delta: f64,
    pub improved: usize,
    pub regressed: usize,
    pub unchanged: usize,
}

/// Deltas smaller than this count as unchanged.
pub const DELTA_EPS: f64 = 1e-12;

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ReportDelta> {
    let ma: BTreeMap<&str, f64> = a
        .per_sample
        .iter()
        .map(|s| (s.sample_id.as_str(), s.iou))
        .collect();
    let mb: BTreeMap<&str, f64> = b
        .per_sample
        .iter()
        .map(|s| (s.sample_id.as_str(), s.iou))
        .collect();
    let ka: BTreeSet<&str> = ma.keys().copied().collect();
    let kb: BTreeSet<&str> = mb.keys().copied().collect();
    if ka != kb {
        return Err(Error::SampleSetMismatch {
            only_a: ka.difference(&kb).count(),
            only_b: kb.difference(&ka).count(),
        });
    }
    let mut out = ReportDelta {
        per_sample: Vec::with_capacity(ma.len()),
        mean_delta: 0.0,
        improved: 0,
        regressed: 0,
        unchanged: 0,
    };
    let mut sum = 0.0;
    for (id, va) in &ma {
        let d = mb[id] - va;
        sum += d;
        if d > DELTA_EPS {
            out.improved += 1;
        } else if d < -DELTA_EPS {
            out.regressed += 1;
        } else {
            out.unchanged += 1;
        }
        out.per_sample.push(SampleScore {
            sample_id: id.to_string(),
            iou: d,
        });
    }
    if !ma.is_empty() {
        out.mean_delta = sum / ma.len() as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageSize;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn truth(id: &str, b: BBox) -> GroundingInstance {
        GroundingInstance {
            sample_id: id.into(),
            image_ref: format!("{id}.jpg"),
            image_size: ImageSize::new(100, 100).unwrap(),
            question: "which?".into(),
            gt_box: Some(b),
            paraphrases: vec![],
        }
    }

    fn run(preds: Vec<(&str, BBox)>, truths: Vec<GroundingInstance>) -> EvalReport {
        evaluate(
            preds.into_iter().map(|(i, b)| (i.to_string(), b)),
            truths,
            Mode::Strict,
            1,
        )
        .unwrap()
        .report
    }

    #[test]
    fn identical_and_disjoint() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(20.0, 20.0, 40.0, 30.0);
        let r = run(vec![("1", a), ("2", b)], vec![truth("1", a), truth("2", b)]);
        assert_eq!(r.mean_iou, 1.0);
        let far = bx(90.0, 90.0, 95.0, 95.0);
        let r = run(
            vec![("1", far), ("2", far)],
            vec![truth("1", a), truth("2", b)],
        );
        assert_eq!(r.mean_iou, 0.0);
    }

    #[test]
    fn two_sample_mean() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let shifted = bx(5.0, 5.0, 15.0, 15.0);
        let r = run(
            vec![("1", a), ("2", shifted)],
            vec![truth("1", a), truth("2", a)],
        );
        assert!((r.mean_iou - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn missing_and_extra() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let r = run(
            vec![("1", a), ("zz", a)],
            vec![truth("1", a), truth("2", a)],
        );
        assert_eq!(r.mean_iou, 0.5);
        assert_eq!(r.matched, 1);
        assert_eq!(r.missing_predictions, vec!["2"]);
        assert_eq!(r.extra_predictions, vec!["zz"]);
        assert_eq!(r.matched + r.missing_predictions.len(), r.ground_truth);
    }

    #[test]
    fn duplicate_predictions_by_mode() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let preds = vec![
            ("1".to_string(), bx(50.0, 50.0, 60.0, 60.0)),
            ("1".to_string(), a),
        ];
        assert!(evaluate(preds.clone(), vec![truth("1", a)], Mode::Strict, 1).is_err());
        let ev = evaluate(preds, vec![truth("1", a)], Mode::Lenient, 1).unwrap();
        assert_eq!(ev.report.mean_iou, 1.0);
        assert_eq!(ev.warnings.len(), 1);
    }

    #[test]
    fn truth_without_box_is_rejected() {
        let mut t = truth("1", bx(0.0, 0.0, 1.0, 1.0));
        t.gt_box = None;
        let err = evaluate(Vec::new(), vec![t], Mode::Strict, 1).unwrap_err();
        assert_eq!(err, Error::MissingGroundTruth("1".into()));
    }

    #[test]
    fn order_invariant() {
        let t: Vec<_> = (0..20)
            .map(|i| truth(&format!("s{i}"), bx(i as f64, 0.0, i as f64 + 10.0, 10.0)))
            .collect();
        let p: Vec<_> = (0..20)
            .map(|i| (format!("s{i}"), bx(0.0, 0.0, 10.0 + i as f64, 10.0)))
            .collect();
        let fwd = evaluate(p.clone(), t.clone(), Mode::Strict, 1)
            .unwrap()
            .report;
        let rev = evaluate(p.into_iter().rev(), t.into_iter().rev(), Mode::Strict, 3)
            .unwrap()
            .report;
        assert_eq!(fwd, rev);
    }

    #[test]
    fn compare_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let truths: Vec<_> = (0..10).map(|i| truth(&i.to_string(), a)).collect();
        let preds: Vec<_> = (0..10)
            .map(|i| (i.to_string(), bx(0.0, 0.0, 10.0, 5.0)))
            .collect();
        let base = evaluate(preds, truths.clone(), Mode::Strict, 1)
            .unwrap()
            .report;
        let same = compare_reports(&base, &base).unwrap();
        assert!(same.per_sample.iter().all(|s| s.iou == 0.0));
        assert_eq!(same.unchanged, 10);

        let mut better = base.clone();
        for s in &mut better.per_sample {
            s.iou += 0.1;
        }
        let d = compare_reports(&base, &better).unwrap();
        assert!((d.mean_delta - 0.1).abs() < 1e-12);
        assert_eq!(d.improved, 10);

        let other = run(vec![("x", a)], vec![truth("x", a)]);
        assert!(matches!(
            compare_reports(&base, &other),
            Err(Error::SampleSetMismatch { .. })
        ));
    }

    #[test]
    fn summary_is_fixed_width() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let r = run(vec![("1", a)], vec![truth("1", a)]);
        let text = r.text_summary();
        assert!(text.lines().all(|l| l.len() == 36));
        assert!(text.starts_with("mean_iou                    1.000000\n"));
    }
}
