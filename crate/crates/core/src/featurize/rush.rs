use crate::domain::{RushOrder, TradeRecord};

use super::FeaturizeError;

/// Folds buy-taker trades into per-millisecond rush orders as they stream in.
///
/// A rush order for millisecond `t` is complete once a trade with a later
/// timestamp arrives, or when the stream is flushed.
#[derive(Debug, Default, Clone)]
pub struct RushAggregator {
    pending: Option<RushOrder>,
    last_key: Option<(i64, u64)>,
}

impl RushAggregator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one trade. Returns the rush order completed by this trade, if any.
    pub fn push(&mut self, trade: &TradeRecord) -> Result<Option<RushOrder>, FeaturizeError> {
        let key = trade.order_key();
        if let Some(last) = self.last_key {
            if key <= last {
                return Err(FeaturizeError::Unsorted {
                    ts_ms: trade.ts_ms,
                    trade_id: trade.trade_id,
                });
            }
        }
        self.last_key = Some(key);

        let mut done = None;
        if let Some(p) = self.pending {
            if p.ts_ms != trade.ts_ms {
                done = self.pending.take();
            }
        }
        if trade.is_buy_taker {
            let p = self.pending.get_or_insert(RushOrder {
                ts_ms: trade.ts_ms,
                quote_volume: 0.0,
                n_fills: 0,
            });
            p.quote_volume += trade.quote_volume();
            p.n_fills += 1;
        }
        Ok(done)
    }

    /// Millisecond of the rush order still being assembled.
    pub fn pending_ts(&self) -> Option<i64> {
        self.pending.map(|p| p.ts_ms)
    }

    pub fn flush(&mut self) -> Option<RushOrder> {
        self.pending.take()
    }
}

/// Aggregates the buy-taker trades of each millisecond into one rush order.
/// Sell-taker trades are ignored.
pub fn infer_rush_orders(trades: &[TradeRecord]) -> Result<Vec<RushOrder>, FeaturizeError> {
    let mut agg = RushAggregator::new();
    let mut out = Vec::new();
    for t in trades {
        if let Some(r) = agg.push(t)? {
            out.push(r);
        }
    }
    out.extend(agg.flush());
    Ok(out)
}
