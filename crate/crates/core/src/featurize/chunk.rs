use serde::{Deserialize, Serialize};

use crate::domain::{Chunk, PipelineConfig, RushOrder, TradeRecord};

use super::FeaturizeError;

/// Contiguous chunks covering a trade series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSeries {
    pub width_s: u32,
    pub chunks: Vec<Chunk>,
}

impl ChunkSeries {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn start_ms(&self) -> Option<i64> {
        self.chunks.first().map(|c| c.start_ms)
    }

    pub fn end_ms(&self) -> Option<i64> {
        self.chunks.last().map(Chunk::end_ms)
    }
}

/// Incremental chunk builder shared by the batch and streaming paths, so both
/// perform the same floating-point additions in the same order.
#[derive(Debug, Clone)]
pub struct ChunkAccumulator {
    width_s: u32,
    width_ms: i64,
    current: Option<Chunk>,
}

impl ChunkAccumulator {
    pub fn new(width_s: u32) -> Self {
        Self {
            width_s,
            width_ms: i64::from(width_s) * 1_000,
            current: None,
        }
    }

    pub fn current(&self) -> Option<&Chunk> {
        self.current.as_ref()
    }

    /// Closes every chunk that ends at or before `ts_ms` and opens the chunk
    /// containing it. Gap chunks are materialized empty with carried-forward
    /// prices. Closed chunks are appended to `out` in time order.
    pub fn advance_to(&mut self, ts_ms: i64, out: &mut Vec<Chunk>) {
        let target = ts_ms.div_euclid(self.width_ms) * self.width_ms;
        match self.current.as_mut() {
            None => {
                // opened by the first trade, whose price overwrites this seed
                self.current = Some(Chunk::empty(target, self.width_s, f64::NAN));
            }
            Some(cur) if cur.start_ms >= target => {}
            Some(_) => {
                let mut cur = self.current.take().expect("checked above");
                while cur.start_ms < target {
                    let next = Chunk::empty(cur.end_ms(), self.width_s, cur.close);
                    out.push(cur);
                    cur = next;
                }
                self.current = Some(cur);
            }
        }
    }

    /// Adds a trade to the open chunk. `advance_to(trade.ts_ms)` must have
    /// been called first.
    pub fn add_trade(&mut self, trade: &TradeRecord) {
        let cur = self
            .current
            .as_mut()
            .expect("advance_to must precede add_trade");
        debug_assert!(cur.contains(trade.ts_ms));
        if cur.n_trades == 0 {
            cur.price_max = trade.price;
            cur.price_min = trade.price;
        } else {
            cur.price_max = cur.price_max.max(trade.price);
            cur.price_min = cur.price_min.min(trade.price);
        }
        cur.close = trade.price;
        cur.n_trades += 1;
        cur.quote_volume += trade.quote_volume();
    }

    /// Adds a completed rush order to the open chunk.
    pub fn add_rush(&mut self, rush: &RushOrder) -> Result<(), FeaturizeError> {
        match self.current.as_mut() {
            Some(cur) if cur.contains(rush.ts_ms) => {
                cur.rush_volume += rush.quote_volume;
                Ok(())
            }
            _ => Err(FeaturizeError::RushOutsideSeries { ts_ms: rush.ts_ms }),
        }
    }

    /// Closes the open chunk.
    pub fn finish(&mut self) -> Option<Chunk> {
        self.current.take()
    }
}

/// Partitions a trade series into chunks of `config.chunk_seconds`, anchored
/// at the chunk boundary at or before the first trade.
pub fn chunk_series(
    trades: &[TradeRecord],
    rush_orders: &[RushOrder],
    config: &PipelineConfig,
) -> Result<ChunkSeries, FeaturizeError> {
    if trades.is_empty() {
        return Err(FeaturizeError::EmptyInput);
    }
    config.validate()?;
    let mut acc = ChunkAccumulator::new(config.chunk_seconds);
    let mut chunks = Vec::with_capacity(estimate_chunks(trades, config));
    let mut rush = rush_orders.iter().peekable();
    let mut prev_key: Option<(i64, u64)> = None;

    for t in trades {
        if prev_key.is_some_and(|k| t.order_key() <= k) {
            return Err(FeaturizeError::Unsorted {
                ts_ms: t.ts_ms,
                trade_id: t.trade_id,
            });
        }
        prev_key = Some(t.order_key());
        while let Some(r) = rush.next_if(|r| r.ts_ms < t.ts_ms) {
            acc.add_rush(r)?;
        }
        acc.advance_to(t.ts_ms, &mut chunks);
        acc.add_trade(t);
    }
    for r in rush {
        acc.add_rush(r)?;
    }
    chunks.extend(acc.finish());
    Ok(ChunkSeries {
        width_s: config.chunk_seconds,
        chunks,
    })
}

fn estimate_chunks(trades: &[TradeRecord], config: &PipelineConfig) -> usize {
    match (trades.first(), trades.last()) {
        (Some(a), Some(b)) => ((b.ts_ms - a.ts_ms) / config.chunk_ms()).max(0) as usize + 2,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::infer_rush_orders;
    use proptest::prelude::*;

    fn cfg() -> PipelineConfig {
        PipelineConfig::new(25, 250).unwrap()
    }

    fn series(trades: &[TradeRecord]) -> ChunkSeries {
        let rush = infer_rush_orders(trades).unwrap();
        chunk_series(trades, &rush, &cfg()).unwrap()
    }

    #[test]
    fn boundary_inclusion() {
        let base = 1_000_000_000_000i64; // multiple of 25 000
        let s = series(&[
            TradeRecord::new(1, base, 1.0, 1.0, true),
            TradeRecord::new(2, base + 24_999, 1.0, 1.0, false),
        ]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.chunks[0].n_trades, 2);
        assert_eq!(s.chunks[0].start_ms, base);
    }

    #[test]
    fn half_open_intervals() {
        let base = 1_000_000_000_000i64;
        let s = series(&[
            TradeRecord::new(1, base, 1.0, 1.0, true),
            TradeRecord::new(2, base + 25_000, 1.0, 1.0, false),
        ]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.chunks[1].start_ms, base + 25_000);
    }

    #[test]
    fn gaps_carry_prices_forward() {
        let base = 1_000_000_000_000i64;
        let s = series(&[
            TradeRecord::new(1, base + 10, 4.0, 1.0, true),
            TradeRecord::new(2, base + 20, 5.0, 2.0, true),
            TradeRecord::new(3, base + 4 * 25_000 + 3, 6.0, 1.0, false),
        ]);
        assert_eq!(s.len(), 5);
        let first = s.chunks[0];
        assert_eq!((first.close, first.price_max, first.price_min), (5.0, 5.0, 4.0));
        assert_eq!(first.quote_volume, 14.0);
        assert_eq!(first.rush_volume, 14.0);
        for c in &s.chunks[1..4] {
            assert_eq!(c.n_trades, 0);
            assert_eq!((c.close, c.price_max, c.price_min), (5.0, 5.0, 5.0));
            assert_eq!((c.quote_volume, c.rush_volume), (0.0, 0.0));
        }
        assert_eq!(s.chunks[4].close, 6.0);
        assert_eq!(s.chunks[4].rush_volume, 0.0);
    }

    #[test]
    fn anchor_is_floor_of_first_trade() {
        let s = series(&[TradeRecord::new(1, 1_000_000_012_345, 1.0, 1.0, true)]);
        assert_eq!(s.chunks[0].start_ms, 1_000_000_000_000);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            chunk_series(&[], &[], &cfg()),
            Err(FeaturizeError::EmptyInput)
        ));
    }

    proptest! {
        #[test]
        fn partition_property(raw in proptest::collection::vec((0i64..40_000, 0.01f64..50.0, 0.01f64..50.0, any::<bool>()), 1..300)) {
            let mut ts = 1_600_000_000_000i64;
            let trades: Vec<TradeRecord> = raw.iter().enumerate().map(|(i, &(dt, p, q, b))| {
                ts += dt;
                TradeRecord::new(i as u64 + 1, ts, p, q, b)
            }).collect();
            let s = series(&trades);
            let n: u64 = s.chunks.iter().map(|c| c.n_trades).sum();
            prop_assert_eq!(n as usize, trades.len());
            let qv: f64 = trades.iter().map(|t| t.price * t.qty).sum();
            let got: f64 = s.chunks.iter().map(|c| c.quote_volume).sum();
            prop_assert!((got - qv).abs() <= 1e-9 * qv);
            let rv: f64 = trades.iter().filter(|t| t.is_buy_taker).map(|t| t.price * t.qty).sum();
            let got: f64 = s.chunks.iter().map(|c| c.rush_volume).sum();
            prop_assert!((got - rv).abs() <= 1e-9 * rv.max(1.0));
            for w in s.chunks.windows(2) {
                prop_assert_eq!(w[0].end_ms(), w[1].start_ms);
            }
            for c in &s.chunks {
                prop_assert!(c.price_min <= c.close && c.close <= c.price_max);
                if c.n_trades == 0 {
                    prop_assert_eq!(c.quote_volume, 0.0);
                    prop_assert_eq!(c.price_max, c.close);
                }
            }
        }
    }
}
