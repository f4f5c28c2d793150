use crate::domain::TradeRecord;
use crate::featurize::ChunkAccumulator;

use super::ReplayError;

/// Shape of a synthetic pump burst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectParams {
    pub at_ms: i64,
    /// Number of rush orders, each on its own millisecond.
    pub n_rush: usize,
    /// Quote volume of each rush order as a multiple of the median per-chunk
    /// quote volume of the base series.
    pub rush_volume_scale: f64,
    pub fills_per_order: usize,
    /// Relative price increase per fill.
    pub price_step: f64,
    /// The burst occupies `[at_ms, at_ms + spread_ms)`.
    pub spread_ms: i64,
}

impl InjectParams {
    pub fn new(at_ms: i64) -> Self {
        Self {
            at_ms,
            n_rush: 10,
            rush_volume_scale: 50.0,
            fills_per_order: 3,
            price_step: 0.01,
            spread_ms: 5_000,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.rush_volume_scale = scale;
        self
    }

    fn validate(&self) -> Result<(), ReplayError> {
        let bad = |m: &str| Err(ReplayError::InvalidInjection(m.to_owned()));
        if !(self.rush_volume_scale >= 0.0 && self.rush_volume_scale.is_finite()) {
            return bad("rush_volume_scale must be finite and non-negative");
        }
        if self.fills_per_order == 0 {
            return bad("fills_per_order must be positive");
        }
        if !(self.price_step >= 0.0 && self.price_step.is_finite()) {
            return bad("price_step must be finite and non-negative");
        }
        if self.n_rush as i64 > self.spread_ms {
            return bad("more rush orders than milliseconds in the burst");
        }
        Ok(())
    }
}

/// Median quote volume per chunk over the span of the series, empty chunks
/// included. Falls back to the mean when the median chunk is empty.
fn median_chunk_volume(trades: &[TradeRecord], chunk_seconds: u32) -> f64 {
    let mut acc = ChunkAccumulator::new(chunk_seconds);
    let mut chunks = Vec::new();
    for t in trades {
        acc.advance_to(t.ts_ms, &mut chunks);
        acc.add_trade(t);
    }
    chunks.extend(acc.finish());
    let mut vols: Vec<f64> = chunks.iter().map(|c| c.quote_volume).collect();
    if vols.is_empty() {
        return 0.0;
    }
    vols.sort_by(f64::total_cmp);
    let n = vols.len();
    let median = if n % 2 == 1 {
        vols[n / 2]
    } else {
        0.5 * (vols[n / 2 - 1] + vols[n / 2])
    };
    if median > 0.0 {
        median
    } else {
        vols.iter().sum::<f64>() / n as f64
    }
}

/// Inserts a burst of buy-taker rush orders into a sorted trade series.
///
/// The orders sit on `n_rush` evenly spaced milliseconds starting at
/// `at_ms`; each has `fills_per_order` fills at rising prices and a total
/// quote volume of `rush_volume_scale` times the median chunk volume. The
/// result is sorted and trade ids are reassigned sequentially from the
/// first base id. A zero scale returns the base series unchanged.
pub fn inject_pump(
    base: &[TradeRecord],
    params: &InjectParams,
    chunk_seconds: u32,
) -> Result<Vec<TradeRecord>, ReplayError> {
    params.validate()?;
    let (first, last) = match (base.first(), base.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(ReplayError::OutOfRange {
                at_ms: params.at_ms,
                first_ms: 0,
                last_ms: 0,
            })
        }
    };
    if params.at_ms < first.ts_ms || params.at_ms > last.ts_ms {
        return Err(ReplayError::OutOfRange {
            at_ms: params.at_ms,
            first_ms: first.ts_ms,
            last_ms: last.ts_ms,
        });
    }
    if params.rush_volume_scale == 0.0 || params.n_rush == 0 {
        return Ok(base.to_vec());
    }

    let order_volume = params.rush_volume_scale * median_chunk_volume(base, chunk_seconds);
    let idx = base.partition_point(|t| t.ts_ms <= params.at_ms);
    let mut price = base[idx.saturating_sub(1)].price;
    let step_ms = params.spread_ms / params.n_rush as i64;
    let fills = params.fills_per_order;

    let mut burst = Vec::with_capacity(params.n_rush * fills);
    for i in 0..params.n_rush {
        let ts_ms = params.at_ms + i as i64 * step_ms;
        for _ in 0..fills {
            price *= 1.0 + params.price_step;
            let qty = order_volume / fills as f64 / price;
            burst.push(TradeRecord::new(0, ts_ms, price, qty, true));
        }
    }

    // base trades precede burst fills sharing their millisecond
    let mut merged: Vec<(i64, u8, usize, TradeRecord)> = base
        .iter()
        .enumerate()
        .map(|(i, t)| (t.ts_ms, 0, i, *t))
        .chain(burst.into_iter().enumerate().map(|(i, t)| (t.ts_ms, 1, i, t)))
        .collect();
    merged.sort_by_key(|m| (m.0, m.1, m.2));
    let first_id = first.trade_id;
    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, _, mut t))| {
            t.trade_id = first_id + i as u64;
            t
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PipelineConfig;
    use crate::featurize::{featurize_trades, infer_rush_orders};

    fn base() -> Vec<TradeRecord> {
        (0..2_000)
            .map(|i| TradeRecord::new(100 + i, 1_000_000 + i as i64 * 3_000, 0.001, 1_000.0, i % 2 == 0))
            .collect()
    }

    #[test]
    fn zero_scale_is_identity() {
        let b = base();
        let p = InjectParams::new(b[500].ts_ms).with_scale(0.0);
        assert_eq!(inject_pump(&b, &p, 25).unwrap(), b);
    }

    #[test]
    fn out_of_range_rejected() {
        let b = base();
        assert!(matches!(
            inject_pump(&b, &InjectParams::new(1), 25),
            Err(ReplayError::OutOfRange { .. })
        ));
    }

    #[test]
    fn burst_shape() {
        let b = base();
        let at = 2_000_000;
        let out = inject_pump(&b, &InjectParams::new(at), 25).unwrap();
        assert_eq!(out.len(), b.len() + 30);
        assert!(out.windows(2).all(|w| w[0].order_key() < w[1].order_key()));
        assert!(out.windows(2).all(|w| w[1].trade_id == w[0].trade_id + 1));
        assert_eq!(out[0].trade_id, 100);

        // each chunk holds 25/3 trades of quote volume 1, so the median is
        // 8 or 9 and every order carries 50x that
        let rush = infer_rush_orders(&out).unwrap();
        let burst: Vec<_> = rush.iter().filter(|r| r.n_fills >= 3).collect();
        assert_eq!(burst.len(), 10);
        assert!(burst.iter().all(|r| r.ts_ms >= at && r.ts_ms < at + 5_000));
        let median = median_chunk_volume(&b, 25);
        for r in &burst {
            let own = if (r.ts_ms - 1_000_000) % 3_000 == 0 && ((r.ts_ms - 1_000_000) / 3_000) % 2 == 0 {
                1.0
            } else {
                0.0
            };
            assert!((r.quote_volume - own - 50.0 * median).abs() < 1e-9 * r.quote_volume);
        }
        let prices: Vec<f64> = out.iter().filter(|t| t.ts_ms >= at && t.ts_ms < at + 5_000 && t.qty < 1_000.0).map(|t| t.price).collect();
        assert!(prices.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn injection_raises_target_chunk() {
        let cfg = PipelineConfig::new(25, 1_250).unwrap();
        let b = base();
        let at = cfg.chunk_floor(b[1_500].ts_ms);
        let before = featurize_trades(&b, &[], &cfg).unwrap();
        let after = featurize_trades(&inject_pump(&b, &InjectParams::new(at), 25).unwrap(), &[], &cfg).unwrap();
        let pick = |vs: &[crate::domain::FeatureVector]| vs.iter().find(|v| v.chunk_start_ms == at).unwrap().std_rush_orders;
        assert!(pick(&after) > 10.0 * pick(&before));
    }
}
