//! Hourly-candle adaptive-threshold baseline.
//!
//! A candle is flagged when both its close and its volume exceed the mean of
//! the preceding `lookback` candles by a configured factor.

use serde::{Deserialize, Serialize};

use crate::domain::TradeRecord;

use super::ModelError;

pub const HOUR_MS: i64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub start_ms: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    /// Quote volume.
    pub volume: f64,
}

/// OHLC and quote volume per `width_ms` bucket. Empty buckets repeat the
/// previous close with zero volume.
pub fn build_candles(trades: &[TradeRecord], width_ms: i64) -> Result<Vec<Candle>, ModelError> {
    let first = trades.first().ok_or(ModelError::EmptyInput)?;
    let mut out: Vec<Candle> = Vec::new();
    let mut cur = Candle {
        start_ms: first.ts_ms.div_euclid(width_ms) * width_ms,
        open: first.price,
        high: first.price,
        low: first.price,
        close: first.price,
        volume: 0.0,
    };
    for t in trades {
        if t.ts_ms < cur.start_ms {
            return Err(ModelError::Unsorted);
        }
        while t.ts_ms >= cur.start_ms + width_ms {
            let c = cur.close;
            out.push(cur);
            cur = Candle {
                start_ms: cur.start_ms + width_ms,
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 0.0,
            };
            if t.ts_ms < cur.start_ms + width_ms {
                cur.open = t.price;
                cur.high = t.price;
                cur.low = t.price;
            }
        }
        cur.high = cur.high.max(t.price);
        cur.low = cur.low.min(t.price);
        cur.close = t.price;
        cur.volume += t.quote_volume();
    }
    out.push(cur);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KampsPreset {
    Initial,
    Balanced,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KampsConfig {
    /// Number of preceding candles averaged for the thresholds.
    pub lookback: usize,
    /// Close must exceed `(1 + price_factor) × mean close`.
    pub price_factor: f64,
    /// Volume must exceed `(1 + volume_factor) × mean volume`.
    pub volume_factor: f64,
}

pub const DEFAULT_LOOKBACK_HOURS: usize = 12;

impl KampsConfig {
    /// Preset factors share one lookback and grow from Initial to Strict, so
    /// Strict flags ⊆ Balanced flags ⊆ Initial flags on any input.
    pub fn preset(preset: KampsPreset, lookback: usize) -> Self {
        let (price_factor, volume_factor) = match preset {
            KampsPreset::Initial => (0.05, 2.0),
            KampsPreset::Balanced => (0.10, 3.0),
            KampsPreset::Strict => (0.15, 4.0),
        };
        Self {
            lookback,
            price_factor,
            volume_factor,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lookback == 0 || !(self.price_factor > 0.0) || !(self.volume_factor > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "kamps config needs lookback >= 1 and positive factors: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One flag per candle. The first `lookback` candles have no history and are
/// never flagged.
pub fn kamps_detect(candles: &[Candle], config: &KampsConfig) -> Result<Vec<bool>, ModelError> {
    config.validate()?;
    let l = config.lookback;
    if candles.len() < l {
        return Err(ModelError::SeriesTooShort {
            len: candles.len(),
            needed: l,
        });
    }
    let mut flags = vec![false; candles.len()];
    for i in l..candles.len() {
        let hist = &candles[i - l..i];
        let mean_close = hist.iter().map(|c| c.close).sum::<f64>() / l as f64;
        let mean_vol = hist.iter().map(|c| c.volume).sum::<f64>() / l as f64;
        let c = &candles[i];
        flags[i] = c.close > (1.0 + config.price_factor) * mean_close
            && c.volume > (1.0 + config.volume_factor) * mean_vol;
    }
    Ok(flags)
}
