//! Evaluation metrics: road-class IoU and temporal label consistency.
//!
//! [`iou`] scores a predicted binary mask against ground truth with the
//! usual intersection-over-union of the road class; [`EvalResult`] keeps the
//! raw confusion counts so scores aggregate exactly (dataset IoU = IoU of
//! summed counts). [`consistency_rate`] measures how often a model keeps its
//! predicted label along tracked point pairs, sharing its exact
//! label-disagreement predicate ([`labels_disagree`]) with the training
//! pipeline's hard-pair mining so the two never drift apart.
//!
//! Label semantics are fixed everywhere: a logit strictly greater than zero
//! is road, so an exact tie counts as non-road.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LogitMap;
use crate::tracker::{TrackStatus, TrackedPair};
use crate::weakmask::BinaryMask;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask sizes differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
    SizeMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
}

/// Pixel confusion counts of one or more mask comparisons, road = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl EvalResult {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    /// Road-class intersection over union. An empty union (neither mask has
    /// any road at all) scores 1.0: the masks agree perfectly.
    pub fn iou_road(&self) -> f64 {
        let union = self.true_positives + self.false_positives + self.false_negatives;
        if union == 0 {
            return 1.0;
        }
        self.true_positives as f64 / union as f64
    }

    /// Sums counts, so `merged(per_image).iou_road()` is the dataset-level
    /// IoU used by common segmentation benchmarks.
    pub fn merged(results: impl IntoIterator<Item = Self>) -> Self {
        results.into_iter().fold(Self::default(), |a, b| Self {
            true_positives: a.true_positives + b.true_positives,
            false_positives: a.false_positives + b.false_positives,
            false_negatives: a.false_negatives + b.false_negatives,
            true_negatives: a.true_negatives + b.true_negatives,
        })
    }
}

/// Confusion counts of `pred` against `gt`.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<EvalResult, MetricsError> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(MetricsError::SizeMismatch {
            a_w: pred.width,
            a_h: pred.height,
            b_w: gt.width,
            b_h: gt.height,
        });
    }
    let mut r = EvalResult::default();
    for (&p, &g) in pred.road.iter().zip(&gt.road) {
        match (p, g) {
            (true, true) => r.true_positives += 1,
            (true, false) => r.false_positives += 1,
            (false, true) => r.false_negatives += 1,
            (false, false) => r.true_negatives += 1,
        }
    }
    Ok(r)
}

/// Whether the two logit maps assign different labels to the endpoints of a
/// tracked pair: road iff the bilinearly sampled logit is strictly positive.
///
/// This is the single source of truth for "inconsistent pair", used both by
/// evaluation and by the training pipeline's hard-pair mining.
pub fn labels_disagree(a: &LogitMap, b: &LogitMap, p: (f64, f64), q: (f64, f64)) -> bool {
    (a.sample(p.0, p.1) > 0.0) != (b.sample(q.0, q.1) > 0.0)
}

/// Fraction of VALID tracked pairs whose predicted labels agree between the
/// two frames: `1 - inconsistent / valid`. Pairs with any other status are
/// ignored; no valid pairs at all scores 1.0.
pub fn consistency_rate(a: &LogitMap, b: &LogitMap, pairs: &[TrackedPair]) -> f64 {
    let mut valid = 0u64;
    let mut inconsistent = 0u64;
    for pair in pairs.iter().filter(|t| t.status == TrackStatus::Valid) {
        valid += 1;
        if labels_disagree(a, b, pair.p, pair.q) {
            inconsistent += 1;
        }
    }
    if valid == 0 {
        return 1.0;
    }
    1.0 - inconsistent as f64 / valid as f64
}
