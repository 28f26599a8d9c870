//! IoU-consensus test-time-augmentation selection.
//!
//! Each augmentation contributes its top-1 box and score. Every candidate's
//! score is corrected by its mean IoU against all candidates (itself
//! included), and the candidate with the highest corrected score wins. The
//! winner is one of the inputs; no box is synthesized.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{iou, AugmentationSpec, BBox};
use crate::number;

/// A top-1 detection produced under one augmentation, already mapped back
/// into the original image frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    box_: BBox,
    score: f64,
    source: AugmentationSpec,
}

impl Prediction {
    pub fn new(box_: BBox, score: f64, source: AugmentationSpec) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore(score));
        }
        Ok(Self {
            box_,
            score,
            source,
        })
    }

    pub fn bbox(&self) -> &BBox {
        &self.box_
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn source(&self) -> &AugmentationSpec {
        &self.source
    }
}

/// All candidates for one sample, in ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub sample_id: String,
    pub predictions: Vec<Prediction>,
}

impl CandidateSet {
    pub fn new(sample_id: impl Into<String>, predictions: Vec<Prediction>) -> Self {
        Self {
            sample_id: sample_id.into(),
            predictions,
        }
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtaResult {
    pub final_box: BBox,
    /// Raw score of the winner. Never the corrected value.
    #[serde(serialize_with = "number::serialize")]
    pub final_score: f64,
    pub winner_index: usize,
    pub corrected_scores: Vec<f64>,
    #[serde(skip)]
    pub winner_source: AugmentationSpec,
}

/// Row means of the full `n x n` pairwise IoU matrix, diagonal included.
pub fn consensus_scores(candidates: &CandidateSet) -> Vec<f64> {
    let preds = &candidates.predictions;
    let n = preds.len();
    if n == 0 {
        return Vec::new();
    }
    // upper triangle only; iou is symmetric
    let mut sums = vec![0.0f64; n];
    for i in 0..n {
        sums[i] += iou(preds[i].bbox(), preds[i].bbox());
        for j in (i + 1)..n {
            let v = iou(preds[i].bbox(), preds[j].bbox());
            sums[i] += v;
            sums[j] += v;
        }
    }
    sums.into_iter().map(|s| s / n as f64).collect()
}

/// Picks the candidate maximizing `score + consensus`; ties go to the
/// earliest index.
pub fn tta_select(candidates: &CandidateSet) -> Result<TtaResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates(candidates.sample_id.clone()));
    }
    let corrected: Vec<f64> = candidates
        .predictions
        .iter()
        .zip(consensus_scores(candidates))
        .map(|(p, c)| p.score() + c)
        .collect();
    let mut winner = 0;
    for (i, &v) in corrected.iter().enumerate().skip(1) {
        if v > corrected[winner] {
            winner = i;
        }
    }
    let w = &candidates.predictions[winner];
    Ok(TtaResult {
        final_box: *w.bbox(),
        final_score: w.score(),
        winner_index: winner,
        corrected_scores: corrected,
        winner_source: *w.source(),
    })
}

/// Outcome of a batch merge: results in input order, plus the samples that
/// could not be merged.
#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub results: Vec<(String, TtaResult)>,
    pub failures: Vec<(String, Error)>,
}

/// Runs [`tta_select`] on every set. `workers == 0` uses rayon's global pool;
/// any worker count yields the same output.
pub fn tta_merge_batch<I>(sets: I, workers: usize) -> Result<BatchOutcome>
where
    I: IntoIterator<Item = CandidateSet>,
{
    let sets: Vec<CandidateSet> = sets.into_iter().collect();
    let run = || -> Vec<Result<TtaResult>> { sets.par_iter().map(tta_select).collect() };
    let selected = crate::parallel::install(workers, run)?;

    let mut outcome = BatchOutcome::default();
    for (set, res) in sets.into_iter().zip(selected) {
        match res {
            Ok(r) => outcome.results.push((set.sample_id, r)),
            Err(e) => outcome.failures.push((set.sample_id, e)),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageSize;
    use proptest::prelude::*;

    fn spec() -> AugmentationSpec {
        AugmentationSpec::identity(ImageSize::new(100, 100).unwrap())
    }

    fn pred(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Prediction {
        Prediction::new(BBox::new(x1, y1, x2, y2).unwrap(), score, spec()).unwrap()
    }

    fn set(preds: Vec<Prediction>) -> CandidateSet {
        CandidateSet::new("s", preds)
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(
            consensus_scores(&set(vec![pred(1.0, 1.0, 5.0, 5.0, 0.3)])),
            vec![1.0]
        );
        let disjoint = set(vec![
            pred(0.0, 0.0, 10.0, 10.0, 0.3),
            pred(20.0, 20.0, 30.0, 30.0, 0.9),
        ]);
        assert_eq!(consensus_scores(&disjoint), vec![0.5, 0.5]);
        let same = set(vec![pred(0.0, 0.0, 10.0, 10.0, 0.1); 3]);
        assert_eq!(consensus_scores(&same), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn consensus_beats_outlier() {
        let s = set(vec![
            pred(0.0, 0.0, 10.0, 10.0, 0.60),
            pred(0.0, 0.0, 10.0, 10.0, 0.50),
            pred(50.0, 50.0, 60.0, 60.0, 0.90),
        ]);
        let r = tta_select(&s).unwrap();
        assert_eq!(r.winner_index, 0);
        assert_eq!(r.final_score, 0.60);
        // hand trace: consensus [2/3, 2/3, 1/3]
        let expected = [0.60 + 2.0 / 3.0, 0.50 + 2.0 / 3.0, 0.90 + 1.0 / 3.0];
        for (got, want) in r.corrected_scores.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_candidate_passes_through() {
        let r = tta_select(&set(vec![pred(2.0, 3.0, 4.0, 5.0, 0.7)])).unwrap();
        assert_eq!(r.final_box, BBox::new(2.0, 3.0, 4.0, 5.0).unwrap());
        assert_eq!(r.final_score, 0.7);
    }

    #[test]
    fn ties_resolve_to_first() {
        let r = tta_select(&set(vec![pred(0.0, 0.0, 10.0, 10.0, 0.4); 4])).unwrap();
        assert_eq!(r.winner_index, 0);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(
            tta_select(&set(vec![])),
            Err(Error::EmptyCandidates(_))
        ));
    }

    #[test]
    fn zero_area_candidates_self_penalize() {
        let s = set(vec![
            pred(5.0, 5.0, 5.0, 5.0, 0.8),
            pred(0.0, 0.0, 10.0, 10.0, 0.5),
        ]);
        let c = consensus_scores(&s);
        assert_eq!(c, vec![0.0, 0.5]);
        assert_eq!(tta_select(&s).unwrap().winner_index, 1);
    }

    #[test]
    fn rejects_scores_outside_unit_interval() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            Prediction::new(b, 1.5, spec()),
            Err(Error::InvalidScore(_))
        ));
        assert!(Prediction::new(b, f64::NAN, spec()).is_err());
    }

    #[test]
    fn batch_preserves_order_and_reports_failures() {
        let sets = vec![
            CandidateSet::new("b", vec![pred(0.0, 0.0, 1.0, 1.0, 0.2)]),
            CandidateSet::new("empty", vec![]),
            CandidateSet::new("a", vec![pred(0.0, 0.0, 2.0, 2.0, 0.3)]),
        ];
        let out = tta_merge_batch(sets, 2).unwrap();
        let ids: Vec<_> = out.results.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, "empty");
        assert!(tta_merge_batch(Vec::new(), 1).unwrap().results.is_empty());
    }

    fn arb_pred() -> impl Strategy<Value = Prediction> {
        (
            0.0..90.0f64,
            0.0..90.0f64,
            0.0..10.0f64,
            0.0..10.0f64,
            0.0..=1.0f64,
        )
            .prop_map(|(x, y, w, h, s)| pred(x, y, x + w, y + h, s))
    }

    proptest! {
        #[test]
        fn corrected_scores_bounded_and_final_score_raw(preds in prop::collection::vec(arb_pred(), 1..8)) {
            let s = set(preds);
            let r = tta_select(&s).unwrap();
            prop_assert!(r.corrected_scores.iter().all(|c| (0.0..=2.0).contains(c)));
            prop_assert_eq!(r.final_score, s.predictions[r.winner_index].score());
            let max = r.corrected_scores.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(r.corrected_scores[r.winner_index], max);
        }

        #[test]
        fn permutation_covariance(preds in prop::collection::vec(arb_pred(), 1..8), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let s = set(preds.clone());
            let r = tta_select(&s).unwrap();
            let mut perm: Vec<usize> = (0..preds.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = set(perm.iter().map(|&i| preds[i]).collect());
            let rp = tta_select(&permuted).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((rp.corrected_scores[k] - r.corrected_scores[i]).abs() < 1e-12);
            }
            let max = rp.corrected_scores[rp.winner_index];
            let tied = r.corrected_scores.iter().filter(|&&c| (c - max).abs() < 1e-12).count();
            if tied == 1 {
                prop_assert_eq!(perm[rp.winner_index], r.winner_index);
            }
        }

        #[test]
        fn identical_boxes_always_return_that_box(b in arb_pred(), scores in prop::collection::vec(0.0..=1.0f64, 1..8)) {
            let preds = scores.iter().map(|&s| Prediction::new(*b.bbox(), s, spec()).unwrap()).collect();
            let r = tta_select(&set(preds)).unwrap();
            prop_assert_eq!(r.final_box, *b.bbox());
        }

        #[test]
        fn duplicates_never_hurt_relative_to_disjoint(a in arb_pred(), others in prop::collection::vec(arb_pred(), 1..6)) {
            let mut base = vec![a];
            base.extend(others.iter().copied());
            let before = consensus_scores(&set(base.clone()));
            let mut dup = base.clone();
            dup.push(a);
            let after = consensus_scores(&set(dup));
            let n = base.len();
            for j in 1..n {
                if iou(base[j].bbox(), a.bbox()) == 0.0 && a.bbox().area() > 0.0 {
                    let gap_before = (a.score() + before[0]) - (base[j].score() + before[j]);
                    let gap_after = (a.score() + after[0]) - (base[j].score() + after[j]);
                    prop_assert!(gap_after >= gap_before - 1e-12);
                }
            }
        }
    }
}
