//! Domain types shared by every stage of the pipeline.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_DAY: i64 = 86_400_000;

/// Largest tolerated distance between two consecutive trades before the
/// validator reports a gap.
pub const MAX_TRADE_GAP_MS: i64 = MS_PER_DAY;

/// One exchange trade print.
///
/// `is_buy_taker` is true when the buyer was the aggressor. Feeds that
/// publish a buyer-is-maker flag are negated during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub trade_id: u64,
    pub ts_ms: i64,
    pub price: f64,
    pub qty: f64,
    pub is_buy_taker: bool,
}

impl TradeRecord {
    pub fn new(trade_id: u64, ts_ms: i64, price: f64, qty: f64, is_buy_taker: bool) -> Self {
        Self {
            trade_id,
            ts_ms,
            price,
            qty,
            is_buy_taker,
        }
    }

    /// Trade size in quote units (price × qty).
    #[inline]
    pub fn quote_volume(&self) -> f64 {
        self.price * self.qty
    }

    /// Sort key of a stored series.
    #[inline]
    pub fn order_key(&self) -> (i64, u64) {
        (self.ts_ms, self.trade_id)
    }
}

/// All buy-taker fills sharing one millisecond, treated as a single
/// aggressive order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RushOrder {
    pub ts_ms: i64,
    pub quote_volume: f64,
    pub n_fills: u32,
}

/// One fixed-width cell of the trade timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub start_ms: i64,
    pub width_s: u32,
    pub n_trades: u64,
    pub quote_volume: f64,
    pub rush_volume: f64,
    pub close: f64,
    pub price_max: f64,
    pub price_min: f64,
}

impl Chunk {
    /// An empty chunk whose prices are carried forward from `close`.
    pub fn empty(start_ms: i64, width_s: u32, close: f64) -> Self {
        Self {
            start_ms,
            width_s,
            n_trades: 0,
            quote_volume: 0.0,
            rush_volume: 0.0,
            close,
            price_max: close,
            price_min: close,
        }
    }

    #[inline]
    pub fn end_ms(&self) -> i64 {
        self.start_ms + i64::from(self.width_s) * MS_PER_SECOND
    }

    #[inline]
    pub fn contains(&self, ts_ms: i64) -> bool {
        ts_ms >= self.start_ms && ts_ms < self.end_ms()
    }
}

/// The nine moving-window features in their fixed order. The position of a
/// variant is the column index used by models and feature importances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    StdRushOrders,
    AvgRushOrders,
    StdTrades,
    StdVolumes,
    AvgVolumes,
    StdPrice,
    AvgPrice,
    AvgPriceMax,
    AvgPriceMin,
}

pub const N_FEATURES: usize = 9;

impl FeatureKind {
    pub const ALL: [FeatureKind; N_FEATURES] = [
        FeatureKind::StdRushOrders,
        FeatureKind::AvgRushOrders,
        FeatureKind::StdTrades,
        FeatureKind::StdVolumes,
        FeatureKind::AvgVolumes,
        FeatureKind::StdPrice,
        FeatureKind::AvgPrice,
        FeatureKind::AvgPriceMax,
        FeatureKind::AvgPriceMin,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Column name used in feature files.
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::StdRushOrders => "std_rush_orders",
            FeatureKind::AvgRushOrders => "avg_rush_orders",
            FeatureKind::StdTrades => "std_trades",
            FeatureKind::StdVolumes => "std_volumes",
            FeatureKind::AvgVolumes => "avg_volumes",
            FeatureKind::StdPrice => "std_price",
            FeatureKind::AvgPrice => "avg_price",
            FeatureKind::AvgPriceMax => "avg_price_max",
            FeatureKind::AvgPriceMin => "avg_price_min",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Moving-window features of one chunk, plus its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub chunk_start_ms: i64,
    pub std_rush_orders: f64,
    pub avg_rush_orders: f64,
    pub std_trades: f64,
    pub std_volumes: f64,
    pub avg_volumes: f64,
    pub std_price: f64,
    pub avg_price: f64,
    pub avg_price_max: f64,
    pub avg_price_min: f64,
    pub label: bool,
}

impl FeatureVector {
    pub fn from_array(chunk_start_ms: i64, f: [f64; N_FEATURES], label: bool) -> Self {
        Self {
            chunk_start_ms,
            std_rush_orders: f[0],
            avg_rush_orders: f[1],
            std_trades: f[2],
            std_volumes: f[3],
            avg_volumes: f[4],
            std_price: f[5],
            avg_price: f[6],
            avg_price_max: f[7],
            avg_price_min: f[8],
            label,
        }
    }

    /// Features in [`FeatureKind::ALL`] order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.std_rush_orders,
            self.avg_rush_orders,
            self.std_trades,
            self.std_volumes,
            self.avg_volumes,
            self.std_price,
            self.avg_price,
            self.avg_price_max,
            self.avg_price_min,
        ]
    }

    pub fn get(&self, kind: FeatureKind) -> f64 {
        self.features()[kind.index()]
    }
}

/// A known pump announcement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PumpEvent {
    pub symbol: String,
    pub exchange: String,
    pub signal_ts_ms: i64,
    pub group: Option<String>,
}

impl PumpEvent {
    pub fn new(symbol: impl Into<String>, exchange: impl Into<String>, signal_ts_ms: i64) -> Self {
        Self {
            symbol: symbol.into(),
            exchange: exchange.into(),
            signal_ts_ms,
            group: None,
        }
    }

    /// UTC day index (days since the UNIX epoch) of the signal.
    pub fn signal_day(&self) -> i64 {
        self.signal_ts_ms.div_euclid(MS_PER_DAY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("chunk_seconds must be positive")]
    ZeroChunk,
    #[error("window_seconds ({window}) must be a multiple of chunk_seconds ({chunk})")]
    WindowNotMultiple { window: u32, chunk: u32 },
    #[error("window must span at least two chunks (window {window}s, chunk {chunk}s)")]
    WindowTooShort { window: u32, chunk: u32 },
    #[error("cooldown_seconds must be positive")]
    ZeroCooldown,
}

fn default_true() -> bool {
    true
}

/// Chunk, window and cooldown settings for featurization and detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub chunk_seconds: u32,
    pub window_seconds: u32,
    pub cooldown_seconds: u32,
    /// When false the window for chunk `i` covers the `k` chunks before it.
    #[serde(default = "default_true")]
    pub window_includes_current: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunk_seconds: 25,
            window_seconds: 7 * 3600,
            cooldown_seconds: 1800,
            window_includes_current: true,
        }
    }
}

impl PipelineConfig {
    pub fn new(chunk_seconds: u32, window_seconds: u32) -> Result<Self, ConfigError> {
        let cfg = Self {
            chunk_seconds,
            window_seconds,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_cooldown(mut self, cooldown_seconds: u32) -> Self {
        self.cooldown_seconds = cooldown_seconds;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chunk_seconds == 0 {
            return Err(ConfigError::ZeroChunk);
        }
        if !self.window_seconds.is_multiple_of(self.chunk_seconds) {
            return Err(ConfigError::WindowNotMultiple {
                window: self.window_seconds,
                chunk: self.chunk_seconds,
            });
        }
        if self.window_seconds < 2 * self.chunk_seconds {
            return Err(ConfigError::WindowTooShort {
                window: self.window_seconds,
                chunk: self.chunk_seconds,
            });
        }
        if self.cooldown_seconds == 0 {
            return Err(ConfigError::ZeroCooldown);
        }
        Ok(())
    }

    #[inline]
    pub fn chunk_ms(&self) -> i64 {
        i64::from(self.chunk_seconds) * MS_PER_SECOND
    }

    #[inline]
    pub fn cooldown_ms(&self) -> i64 {
        i64::from(self.cooldown_seconds) * MS_PER_SECOND
    }

    /// Number of chunks per window (k = w / s).
    #[inline]
    pub fn window_chunks(&self) -> usize {
        (self.window_seconds / self.chunk_seconds) as usize
    }

    /// Start of the chunk containing `ts_ms`.
    #[inline]
    pub fn chunk_floor(&self, ts_ms: i64) -> i64 {
        ts_ms.div_euclid(self.chunk_ms()) * self.chunk_ms()
    }
}

/// A fired detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionAlert {
    pub symbol: String,
    pub chunk_start_ms: i64,
    pub score: f64,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    OutOfOrder { prev_ts_ms: i64, prev_trade_id: u64 },
    DuplicateId { trade_id: u64 },
    NonPositivePrice { price: f64 },
    NonPositiveQty { qty: f64 },
    NonPositiveTimestamp { ts_ms: i64 },
    Gap { gap_ms: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the offending record.
    pub index: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub clean: bool,
    pub n_records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn count(&self, pred: impl Fn(&ViolationKind) -> bool) -> usize {
        self.violations.iter().filter(|v| pred(&v.kind)).count()
    }
}

/// Checks a stored trade series against the [`TradeRecord`] invariants.
/// Never fails; every problem ends up in the report.
pub fn validate_trade_series(trades: &[TradeRecord]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::with_capacity(trades.len());
    for (index, t) in trades.iter().enumerate() {
        if !seen.insert(t.trade_id) {
            violations.push(Violation {
                index,
                kind: ViolationKind::DuplicateId { trade_id: t.trade_id },
            });
        }
        // NaN fails `> 0` too
        if !(t.price > 0.0) {
            violations.push(Violation {
                index,
                kind: ViolationKind::NonPositivePrice { price: t.price },
            });
        }
        if !(t.qty > 0.0) {
            violations.push(Violation {
                index,
                kind: ViolationKind::NonPositiveQty { qty: t.qty },
            });
        }
        if t.ts_ms <= 0 {
            violations.push(Violation {
                index,
                kind: ViolationKind::NonPositiveTimestamp { ts_ms: t.ts_ms },
            });
        }
        if index > 0 {
            let prev = &trades[index - 1];
            if t.ts_ms < prev.ts_ms || t.trade_id <= prev.trade_id {
                violations.push(Violation {
                    index,
                    kind: ViolationKind::OutOfOrder {
                        prev_ts_ms: prev.ts_ms,
                        prev_trade_id: prev.trade_id,
                    },
                });
            }
            let gap = t.ts_ms - prev.ts_ms;
            if gap > MAX_TRADE_GAP_MS {
                violations.push(Violation {
                    index,
                    kind: ViolationKind::Gap { gap_ms: gap },
                });
            }
        }
    }
    ValidationReport {
        clean: violations.is_empty(),
        n_records: trades.len(),
        violations,
    }
}

/// Sorts trades into stored-series order.
pub fn sort_trades(trades: &mut [TradeRecord]) {
    trades.sort_by_key(TradeRecord::order_key);
}
