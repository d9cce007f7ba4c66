use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event_pipeline::{DetectionEvent, EventKind};
use crate::scenario_gen::TruthEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// Undefined without predictions.
    pub precision: Option<f64>,
    /// Undefined without ground truth.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ClassificationMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        let f1 = match (precision, recall) {
            (None, None) => None,
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => Some(0.0),
        };
        ClassificationMetrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Anything with a kind and an inclusive frame span.
pub trait Scored {
    fn kind(&self) -> EventKind;
    fn span(&self) -> [u64; 2];
}

impl Scored for DetectionEvent {
    fn kind(&self) -> EventKind {
        self.kind
    }
    fn span(&self) -> [u64; 2] {
        self.frame_span
    }
}

impl Scored for TruthEvent {
    fn kind(&self) -> EventKind {
        self.kind
    }
    fn span(&self) -> [u64; 2] {
        self.frame_span
    }
}

impl Scored for (EventKind, [u64; 2]) {
    fn kind(&self) -> EventKind {
        self.0
    }
    fn span(&self) -> [u64; 2] {
        self.1
    }
}

fn overlap(a: [u64; 2], b: [u64; 2]) -> bool {
    a[0] <= b[1] && b[0] <= a[1]
}

/// One-to-one matching: predictions in order of onset each take the
/// earliest-onset unmatched truth event of the same kind whose span
/// overlaps. Returns `(prediction, truth)` index pairs.
pub fn match_events<P: Scored, T: Scored>(predicted: &[P], truth: &[T]) -> Vec<(usize, usize)> {
    let mut pred_order: Vec<usize> = (0..predicted.len()).collect();
    pred_order.sort_by_key(|&i| (predicted[i].span()[0], i));
    let mut truth_order: Vec<usize> = (0..truth.len()).collect();
    truth_order.sort_by_key(|&j| (truth[j].span()[0], j));
    let mut taken = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for i in pred_order {
        let p = &predicted[i];
        let hit = truth_order
            .iter()
            .copied()
            .find(|&j| !taken[j] && truth[j].kind() == p.kind() && overlap(truth[j].span(), p.span()));
        if let Some(j) = hit {
            taken[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

pub fn score_events<P: Scored, T: Scored>(predicted: &[P], truth: &[T]) -> ClassificationMetrics {
    let tp = match_events(predicted, truth).len() as u64;
    ClassificationMetrics::from_counts(
        tp,
        predicted.len() as u64 - tp,
        truth.len() as u64 - tp,
    )
}

/// Metrics per event kind present in either list.
pub fn score_by_kind<P: Scored, T: Scored>(
    predicted: &[P],
    truth: &[T],
) -> BTreeMap<EventKind, ClassificationMetrics> {
    let mut kinds: Vec<EventKind> = predicted
        .iter()
        .map(Scored::kind)
        .chain(truth.iter().map(Scored::kind))
        .collect();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .map(|k| {
            let p: Vec<(EventKind, [u64; 2])> = predicted
                .iter()
                .filter(|e| e.kind() == k)
                .map(|e| (k, e.span()))
                .collect();
            let t: Vec<(EventKind, [u64; 2])> = truth
                .iter()
                .filter(|e| e.kind() == k)
                .map(|e| (k, e.span()))
                .collect();
            (k, score_events(&p, &t))
        })
        .collect()
}
