//! Trade series → labeled feature vectors.
//!
//! The pipeline is: [`infer_rush_orders`] → [`chunk_series`] →
//! [`moving_features`] → [`label_chunks`]. The streaming detector in
//! [`crate::replay`] drives the same [`ChunkAccumulator`] and
//! [`FeatureEngine`] one trade at a time.

mod chunk;
mod io;
mod rush;
mod window;

use log::warn;
use thiserror::Error;

use crate::domain::{ConfigError, FeatureVector, PipelineConfig, PumpEvent, TradeRecord};

pub use chunk::{chunk_series, ChunkAccumulator, ChunkSeries};
pub use io::{read_feature_csv, write_feature_csv, FEATURE_CSV_HEADER};
pub use rush::{infer_rush_orders, RushAggregator};
pub use window::{ColumnStats, FeatureEngine, MovingWindow, N_COLUMNS};

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("trades not sorted by (ts_ms, trade_id) at ts {ts_ms}, id {trade_id}")]
    Unsorted { ts_ms: i64, trade_id: u64 },
    #[error("trade series is empty")]
    EmptyInput,
    #[error("rush order at {ts_ms} does not fall in the open chunk")]
    RushOutsideSeries { ts_ms: i64 },
    #[error("series has {chunks} chunks but the window needs {needed}")]
    SeriesTooShort { chunks: usize, needed: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("feature file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Computes the nine window features for every chunk with a full window.
///
/// With the default inclusive window, chunk `i` sees chunks `i-k+1..=i` and
/// the first `k-1` chunks emit nothing.
pub fn moving_features(
    series: &ChunkSeries,
    config: &PipelineConfig,
) -> Result<Vec<FeatureVector>, FeaturizeError> {
    config.validate()?;
    let k = config.window_chunks();
    if series.len() < k {
        return Err(FeaturizeError::SeriesTooShort {
            chunks: series.len(),
            needed: k,
        });
    }
    let mut engine = FeatureEngine::new(config);
    let mut out = Vec::with_capacity(series.len() + 1 - k);
    for c in &series.chunks {
        out.extend(engine.push(c));
    }
    Ok(out)
}

/// Outcome of [`label_chunks`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelReport {
    pub positives: usize,
    /// Events whose signal chunk has no feature vector.
    pub skipped: Vec<PumpEvent>,
}

/// Marks the chunk containing each event's signal as positive and clears
/// every other label. `vectors` must be sorted by `chunk_start_ms`.
pub fn label_chunks(
    vectors: &mut [FeatureVector],
    events: &[PumpEvent],
    chunk_seconds: u32,
) -> LabelReport {
    let width = i64::from(chunk_seconds) * 1_000;
    for v in vectors.iter_mut() {
        v.label = false;
    }
    let mut report = LabelReport::default();
    for ev in events {
        let start = ev.signal_ts_ms.div_euclid(width) * width;
        match vectors.binary_search_by_key(&start, |v| v.chunk_start_ms) {
            Ok(i) => {
                if !vectors[i].label {
                    vectors[i].label = true;
                    report.positives += 1;
                }
            }
            Err(_) => {
                warn!(
                    "event {} at {} falls outside the featurized series; skipped",
                    ev.symbol, ev.signal_ts_ms
                );
                report.skipped.push(ev.clone());
            }
        }
    }
    report
}

/// Full batch pipeline for one symbol: rush orders, chunks, features and,
/// if events are given, labels.
pub fn featurize_trades(
    trades: &[TradeRecord],
    events: &[PumpEvent],
    config: &PipelineConfig,
) -> Result<Vec<FeatureVector>, FeaturizeError> {
    let rush = infer_rush_orders(trades)?;
    let series = chunk_series(trades, &rush, config)?;
    let mut vectors = moving_features(&series, config)?;
    if !events.is_empty() {
        label_chunks(&mut vectors, events, config.chunk_seconds);
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Chunk;

    fn cfg(s: u32, w: u32) -> PipelineConfig {
        PipelineConfig::new(s, w).unwrap()
    }

    fn constant_series(n: usize) -> ChunkSeries {
        let chunks = (0..n)
            .map(|i| Chunk {
                start_ms: i as i64 * 25_000,
                width_s: 25,
                n_trades: 4,
                quote_volume: 7.5,
                rush_volume: 2.5,
                close: 3.0,
                price_max: 3.5,
                price_min: 2.5,
            })
            .collect();
        ChunkSeries { width_s: 25, chunks }
    }

    #[test]
    fn constant_series_features() {
        let v = moving_features(&constant_series(10), &cfg(25, 75)).unwrap();
        assert_eq!(v.len(), 10 - 3 + 1);
        for f in &v {
            assert_eq!(f.std_rush_orders, 0.0);
            assert_eq!(f.std_trades, 0.0);
            assert_eq!(f.std_volumes, 0.0);
            assert_eq!(f.std_price, 0.0);
            assert_eq!(f.avg_rush_orders, 2.5);
            assert_eq!(f.avg_volumes, 7.5);
            assert_eq!(f.avg_price, 3.0);
            assert_eq!(f.avg_price_max, 3.5);
            assert_eq!(f.avg_price_min, 2.5);
        }
    }

    #[test]
    fn rush_window_hand_example() {
        let mut s = constant_series(3);
        for (c, r) in s.chunks.iter_mut().zip([0.0, 0.0, 30.0]) {
            c.rush_volume = r;
        }
        let v = moving_features(&s, &cfg(25, 75)).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0].avg_rush_orders - 10.0).abs() < 1e-12);
        assert!((v[0].std_rush_orders - 14.142135623730951).abs() < 1e-9);
    }

    #[test]
    fn too_short_series() {
        assert!(matches!(
            moving_features(&constant_series(2), &cfg(25, 75)),
            Err(FeaturizeError::SeriesTooShort { chunks: 2, needed: 3 })
        ));
    }

    fn vectors(n: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|i| FeatureVector::from_array(1_000_000 + i as i64 * 25_000, [0.0; 9], false))
            .collect()
    }

    #[test]
    fn label_at_chunk_start_boundary() {
        let mut v = vectors(5);
        let ev = PumpEvent::new("X/BTC", "binance", 1_000_000 + 2 * 25_000);
        let r = label_chunks(&mut v, &[ev], 25);
        assert_eq!(r.positives, 1);
        assert!(v[2].label);
    }

    #[test]
    fn label_one_ms_before_start_goes_to_previous_chunk() {
        let mut v = vectors(5);
        let ev = PumpEvent::new("X/BTC", "binance", 1_000_000 + 2 * 25_000 - 1);
        label_chunks(&mut v, &[ev], 25);
        assert!(v[1].label);
        assert!(!v[2].label);
    }

    #[test]
    fn exactly_one_positive_per_event_and_outside_events_skipped() {
        let mut v = vectors(40);
        v[7].label = true; // stale label is cleared
        let inside = PumpEvent::new("X/BTC", "binance", 1_000_000 + 13 * 25_000 + 12_345);
        let outside = PumpEvent::new("X/BTC", "binance", 10);
        let r = label_chunks(&mut v, &[inside, outside.clone()], 25);
        assert_eq!(v.iter().filter(|x| x.label).count(), 1);
        assert!(v[13].label);
        assert_eq!(r.skipped, vec![outside]);
    }
}
