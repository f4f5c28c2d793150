use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVector, PipelineConfig, PumpEvent};
use crate::featurize::featurize_trades;
use crate::ingest::{extract_core_days, DatasetManifest};
use crate::models::ModelSpec;

use super::{precision_recall_f1, EvalError, Metrics};

/// The labeled feature vectors of one event's core days.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    pub event: PumpEvent,
    pub vectors: Vec<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvDataset {
    pub config: PipelineConfig,
    pub series: Vec<EventSeries>,
    /// Events left out, with the reason.
    pub skipped: Vec<(PumpEvent, String)>,
}

impl CvDataset {
    pub fn n_events(&self) -> usize {
        self.series.len()
    }

    pub fn all_vectors(&self) -> Vec<FeatureVector> {
        self.series.iter().flat_map(|s| s.vectors.iter().copied()).collect()
    }
}

/// Featurizes the core days of every event in the manifest. Each series is
/// labeled with every event of its symbol that falls inside it. Events whose
/// data is missing or too short are skipped with a warning.
pub fn build_cv_dataset(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<CvDataset, EvalError> {
    config.validate().map_err(crate::featurize::FeaturizeError::from)?;
    let built: Vec<Result<EventSeries, (PumpEvent, String)>> = manifest
        .events
        .par_iter()
        .map(|event| {
            let fail = |e: String| (event.clone(), e);
            let trades = extract_core_days(manifest, event).map_err(|e| fail(e.to_string()))?;
            let same_symbol: Vec<PumpEvent> = manifest.events_for(&event.symbol).into_iter().cloned().collect();
            let vectors = featurize_trades(&trades, &same_symbol, config).map_err(|e| fail(e.to_string()))?;
            Ok(EventSeries {
                event: event.clone(),
                vectors,
            })
        })
        .collect();
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    for b in built {
        match b {
            Ok(s) => series.push(s),
            Err((ev, why)) => {
                warn!("skipping {} at {}: {why}", ev.symbol, ev.signal_ts_ms);
                skipped.push((ev, why));
            }
        }
    }
    Ok(CvDataset {
        config: *config,
        series,
        skipped,
    })
}

/// How held-out sets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every chunk of one event's series lands in the same fold.
    #[default]
    EventGrouped,
    /// Chunks are assigned independently. Leaks overlapping windows between
    /// train and test; kept for comparison only.
    ChunkRandom,
}

/// Fold index of each of `n` items: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        fold[item] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test_events: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: ModelSpec,
    pub config: PipelineConfig,
    pub k: usize,
    pub seed: u64,
    pub split: SplitMode,
    pub n_events: usize,
    pub folds: Vec<FoldReport>,
    /// Unweighted mean over folds.
    pub mean: MeanMetrics,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per fold plus a `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "n_train", "n_test", "tp", "fp", "fn", "precision", "recall", "f1"])?;
        for f in &self.folds {
            let m = &f.metrics;
            w.write_record([
                f.fold.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
            ])?;
        }
        let m = &self.mean;
        w.write_record([
            "mean".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// k-fold cross-validation of `spec` on chunk-level labels. Folds train and
/// score independently in parallel.
pub fn kfold_cv(
    dataset: &CvDataset,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
    split: SplitMode,
) -> Result<CvReport, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let n_events = dataset.n_events();
    if n_events < k {
        return Err(EvalError::TooFewEvents { events: n_events, k });
    }

    // (fold of each vector, event count per fold)
    let (vector_fold, events_per_fold) = match split {
        SplitMode::EventGrouped => {
            let ev_fold = fold_assignment(n_events, k, seed);
            let mut counts = vec![0; k];
            ev_fold.iter().for_each(|&f| counts[f] += 1);
            let vf: Vec<usize> = dataset
                .series
                .iter()
                .zip(&ev_fold)
                .flat_map(|(s, &f)| std::iter::repeat_n(f, s.vectors.len()))
                .collect();
            (vf, counts)
        }
        SplitMode::ChunkRandom => {
            let n = dataset.series.iter().map(|s| s.vectors.len()).sum();
            (fold_assignment(n, k, seed), vec![0; k])
        }
    };
    let vectors = dataset.all_vectors();

    let folds: Vec<Result<FoldReport, EvalError>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (v, &f) in vectors.iter().zip(&vector_fold) {
                if f == fold {
                    test.push(*v);
                } else {
                    train.push(*v);
                }
            }
            let model = spec.train(&train).map_err(|source| EvalError::Fold { fold, source })?;
            let predicted = test
                .iter()
                .map(|v| model.predict(v))
                .collect::<Result<Vec<bool>, _>>()
                .map_err(|source| EvalError::Fold { fold, source })?;
            let actual: Vec<bool> = test.iter().map(|v| v.label).collect();
            Ok(FoldReport {
                fold,
                n_test_events: events_per_fold[fold],
                n_train: train.len(),
                n_test: test.len(),
                metrics: precision_recall_f1(&predicted, &actual)?,
            })
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = |f: fn(&Metrics) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / k as f64;
    let mean = MeanMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    Ok(CvReport {
        model: spec.clone(),
        config: dataset.config,
        k,
        seed,
        split,
        n_events,
        folds,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FeatureKind;
    use proptest::prelude::*;

    #[test]
    fn fold_sizes_for_104_events() {
        let f = fold_assignment(104, 5, 7);
        let mut sizes = [0; 5];
        f.iter().for_each(|&i| sizes[i] += 1);
        assert!(sizes.iter().all(|&s| s == 20 || s == 21), "{sizes:?}");
        assert_eq!(f, fold_assignment(104, 5, 7));
        assert_ne!(f, fold_assignment(104, 5, 8));
    }

    fn toy_dataset(n_events: usize) -> CvDataset {
        // feature 0 carries the label exactly
        let series = (0..n_events)
            .map(|e| EventSeries {
                event: PumpEvent::new(format!("E{e}/BTC"), "x", 1_000 + e as i64),
                vectors: (0..20)
                    .map(|i| {
                        let pos = i == 10;
                        let x = if pos { 100.0 } else { i as f64 };
                        FeatureVector::from_array(i as i64 * 25_000, [x, 0., 0., 0., 0., 0., 0., 0., 0.], pos)
                    })
                    .collect(),
            })
            .collect();
        CvDataset {
            config: PipelineConfig::default(),
            series,
            skipped: Vec::new(),
        }
    }

    #[test]
    fn separable_data_scores_perfectly() {
        let d = toy_dataset(12);
        let spec = ModelSpec::Threshold {
            feature: FeatureKind::StdRushOrders,
        };
        let r = kfold_cv(&d, &spec, 5, 1, SplitMode::EventGrouped).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.folds.iter().map(|f| f.n_test_events).sum::<usize>(), 12);
        assert_eq!(r.folds.iter().map(|f| f.n_test).sum::<usize>(), 240);
        assert!((r.mean.f1 - 1.0).abs() < 1e-12);
        let again = kfold_cv(&d, &spec, 5, 1, SplitMode::EventGrouped).unwrap();
        assert_eq!(r, again);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn too_few_events() {
        let d = toy_dataset(3);
        assert!(matches!(
            kfold_cv(&d, &ModelSpec::threshold(), 5, 0, SplitMode::EventGrouped),
            Err(EvalError::TooFewEvents { events: 3, k: 5 })
        ));
    }

    proptest! {
        #[test]
        fn folds_partition_items(n in 1usize..300, k in 2usize..12, seed in any::<u64>()) {
            let f = fold_assignment(n, k, seed);
            prop_assert_eq!(f.len(), n);
            let mut sizes = vec![0usize; k];
            for &i in &f {
                prop_assert!(i < k);
                sizes[i] += 1;
            }
            let (lo, hi) = (n / k, n.div_ceil(k));
            prop_assert!(sizes.iter().all(|&s| s == lo || s == hi));
        }
    }
}
