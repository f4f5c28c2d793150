use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{FeatureKind, FeatureVector};

use super::ModelError;

/// Fires when one feature reaches a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub feature: FeatureKind,
    pub threshold: f64,
}

impl ThresholdModel {
    pub fn new(feature: FeatureKind, threshold: f64) -> Self {
        Self { feature, threshold }
    }

    /// The raw feature value; the model fires iff it is ≥ the threshold.
    pub fn score(&self, v: &FeatureVector) -> f64 {
        v.get(self.feature)
    }

    pub fn fires(&self, v: &FeatureVector) -> bool {
        self.score(v) >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        }
    }
}

/// Precision and recall at every distinct score, ascending by threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Writes `threshold,precision,recall` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "precision", "recall"])?;
        for p in &self.points {
            w.serialize((p.threshold, p.precision, p.recall))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Precision and recall of the rule `score >= threshold`. Precision is 0
/// when nothing fires.
pub fn pr_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> PrPoint {
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        pos += l as usize;
        if s >= threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    PrPoint {
        threshold,
        precision: if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: if pos == 0 { 0.0 } else { tp as f64 / pos as f64 },
    }
}

/// Builds the precision-recall curve over every distinct score and returns
/// a threshold for the F1-maximizing point (the highest one on ties), placed
/// halfway down to the next lower score.
pub fn fit_threshold_scores(scores: &[f64], labels: &[bool]) -> Result<(f64, PrCurve), ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(ModelError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| !scores[i].is_nan()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    // descending sweep: strict improvement keeps the highest threshold on ties
    let best = points
        .iter()
        .enumerate()
        .fold(None::<(usize, &PrPoint)>, |acc, (i, p)| match acc {
            Some((j, b)) if p.f1() <= b.f1() => Some((j, b)),
            _ => Some((i, p)),
        })
        .ok_or(ModelError::EmptyInput)?
        .0;
    // any cut in (next lower score, best] fires on the same training set; take
    // the midpoint so unseen scores get margin on both sides
    let t = points[best].threshold;
    let threshold = match points.get(best + 1) {
        Some(lower) => {
            let mid = lower.threshold + (t - lower.threshold) / 2.0;
            if mid > lower.threshold && mid <= t {
                mid
            } else {
                t
            }
        }
        None => t,
    };
    points.reverse();
    Ok((threshold, PrCurve { points }))
}

/// Fits a threshold on `feature` (normally [`FeatureKind::StdRushOrders`])
/// by maximizing F1 over labeled training vectors.
pub fn fit_threshold_detector(
    vectors: &[FeatureVector],
    feature: FeatureKind,
) -> Result<(ThresholdModel, PrCurve), ModelError> {
    let scores: Vec<f64> = vectors.iter().map(|v| v.get(feature)).collect();
    let labels: Vec<bool> = vectors.iter().map(|v| v.label).collect();
    let (threshold, curve) = fit_threshold_scores(&scores, &labels)?;
    Ok((ThresholdModel::new(feature, threshold), curve))
}
