//! Metrics, event-grouped cross-validation, the suspect scan and detection
//! latency.

mod cv;
mod scan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DetectionAlert, PipelineConfig, PumpEvent};
use crate::featurize::FeaturizeError;
use crate::ingest::IngestError;
use crate::models::ModelError;
use crate::replay::ReplayError;

pub use cv::{build_cv_dataset, fold_assignment, kfold_cv, CvDataset, CvReport, EventSeries, FoldReport, SplitMode};
pub use scan::{scan_suspects, ScanReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predicted} predictions for {actual} labels")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("{k}-fold cross-validation needs at least {k} events, got {events}")]
    TooFewEvents { events: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Confusion counts with precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Precision, recall and F1 of `predicted` against `actual`. Each is 0 when
/// its denominator is.
pub fn precision_recall_f1(predicted: &[bool], actual: &[bool]) -> Result<Metrics, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// How quickly one event was detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLatency {
    pub event: PumpEvent,
    pub alert_chunk_start_ms: Option<i64>,
    /// Alert chunk end minus signal time. Negative when the alert predates
    /// the signal. `None` when the event was missed.
    pub latency_s: Option<f64>,
}

/// Pairs each event with the earliest alert on its symbol within one
/// cooldown of the signal, either side, and reports the delay from the
/// signal to the end of that alert's chunk.
pub fn detection_latency(alerts: &[DetectionAlert], events: &[PumpEvent], config: &PipelineConfig) -> Vec<EventLatency> {
    let reach = config.cooldown_ms();
    events
        .iter()
        .map(|e| {
            let hit = alerts
                .iter()
                .filter(|a| a.symbol == e.symbol && (a.chunk_start_ms - e.signal_ts_ms).abs() <= reach)
                .map(|a| a.chunk_start_ms)
                .min();
            EventLatency {
                event: e.clone(),
                alert_chunk_start_ms: hit,
                latency_s: hit.map(|s| (s + config.chunk_ms() - e.signal_ts_ms) as f64 / 1_000.0),
            }
        })
        .collect()
}
