//! Historical trade download, trade/event files, and per-event datasets.

mod client;
mod dataset;
mod files;

use thiserror::Error;

pub use client::{
    parse_page, ClientConfig, ExchangeClient, FetchCheckpoint, FetchError, FetchErrorKind, FieldMap, RateLimiter,
    TradeSource,
};
pub use dataset::{
    build_event_dataset, extract_core_days, merge_day_ranges, trade_file_name, DatasetManifest, DayRange,
    ManifestFailure, ManifestFile, MANIFEST_FILE_NAME, MANIFEST_FORMAT_VERSION,
};
pub use files::{
    read_events, read_events_file, read_raw_trade_file, read_trade_file, write_atomic, write_events, write_raw_trades,
    write_trade_records, RawTrade, TradeFileReader, EVENTS_CSV_HEADER, TRADE_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("bad {field} value `{value}`")]
    BadValue { field: &'static str, value: String },
    #[error("event {symbol} at {signal_ts_ms} is not in the manifest")]
    EventNotFound { symbol: String, signal_ts_ms: i64 },
    #[error("stored data for {symbol} does not cover days {needed:?}")]
    PartialCoverage { symbol: String, needed: DayRange },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
