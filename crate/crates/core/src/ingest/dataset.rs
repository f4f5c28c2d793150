use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::domain::{PumpEvent, TradeRecord, MS_PER_DAY};

use super::client::TradeSource;
use super::files::{read_trade_file, write_atomic, write_raw_trades};
use super::IngestError;

/// Half-open range of UTC day indices (days since the UNIX epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayRange {
    pub start_day: i64,
    pub end_day: i64,
}

impl DayRange {
    pub fn new(start_day: i64, end_day: i64) -> Self {
        Self { start_day, end_day }
    }

    pub fn days(&self) -> i64 {
        self.end_day - self.start_day
    }

    pub fn start_ms(&self) -> i64 {
        self.start_day * MS_PER_DAY
    }

    pub fn end_ms(&self) -> i64 {
        self.end_day * MS_PER_DAY
    }

    pub fn covers(&self, other: &DayRange) -> bool {
        self.start_day <= other.start_day && other.end_day <= self.end_day
    }

    pub fn contains_ms(&self, ts_ms: i64) -> bool {
        ts_ms >= self.start_ms() && ts_ms < self.end_ms()
    }

    /// Days `[D - before, D + after)` around the event's signal day `D`.
    pub fn around_event(event: &PumpEvent, days_before: i64, days_after: i64) -> Self {
        let d = event.signal_day();
        Self::new(d - days_before, d + days_after)
    }

    /// The signal day with one day on either side.
    pub fn core_days(event: &PumpEvent) -> Self {
        let d = event.signal_day();
        Self::new(d - 1, d + 2)
    }
}

/// Merges overlapping or adjacent ranges; the result is sorted and disjoint.
pub fn merge_day_ranges(mut ranges: Vec<DayRange>) -> Vec<DayRange> {
    ranges.retain(|r| r.end_day > r.start_day);
    ranges.sort();
    let mut out: Vec<DayRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start_day <= last.end_day => last.end_day = last.end_day.max(r.end_day),
            _ => out.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub symbol: String,
    pub range: DayRange,
    /// Relative to the manifest's directory.
    pub path: String,
    pub n_trades: usize,
    pub fetched_at_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub symbol: String,
    pub range: DayRange,
    pub error: String,
}

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub days_before: i64,
    pub days_after: i64,
    pub events: Vec<PumpEvent>,
    pub files: Vec<ManifestFile>,
    /// Index into `files` for each event, parallel to `events`. `None` when
    /// the event's range failed to download.
    pub event_files: Vec<Option<usize>>,
    pub failures: Vec<ManifestFailure>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let mut m: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, self)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Stored day ranges per symbol.
    pub fn covered_ranges(&self, symbol: &str) -> Vec<DayRange> {
        let mut v: Vec<DayRange> = self.files.iter().filter(|f| f.symbol == symbol).map(|f| f.range).collect();
        v.sort();
        v
    }

    pub fn file_path(&self, file: &ManifestFile) -> PathBuf {
        self.base_dir.join(&file.path)
    }

    pub fn event_index(&self, event: &PumpEvent) -> Option<usize> {
        self.events
            .iter()
            .position(|e| e.symbol == event.symbol && e.signal_ts_ms == event.signal_ts_ms)
    }

    /// Events of `symbol`, in manifest order.
    pub fn events_for(&self, symbol: &str) -> Vec<&PumpEvent> {
        self.events.iter().filter(|e| e.symbol == symbol).collect()
    }
}

fn day_label(day: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(day * MS_PER_DAY)
        .map(|d| d.format("%Y%m%d").to_string())
        .unwrap_or_else(|| day.to_string())
}

pub fn trade_file_name(symbol: &str, range: &DayRange) -> String {
    let clean: String = symbol
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    format!("{clean}_{}_{}.csv", day_label(range.start_day), day_label(range.end_day))
}

/// Downloads `[D - days_before, D + days_after)` for every event, merging
/// overlapping windows of the same symbol so no day is stored twice, and
/// writes the trade files plus `manifest.json` into `out_dir`.
///
/// Symbols are fetched concurrently; ranges within a symbol sequentially.
/// Failed ranges are recorded in `failures` and the remaining entries are
/// still written.
pub fn build_event_dataset(
    events: &[PumpEvent],
    days_before: i64,
    days_after: i64,
    source: &dyn TradeSource,
    out_dir: &Path,
) -> Result<DatasetManifest, IngestError> {
    std::fs::create_dir_all(out_dir)?;
    let mut by_symbol: BTreeMap<&str, Vec<DayRange>> = BTreeMap::new();
    for e in events {
        by_symbol
            .entry(e.symbol.as_str())
            .or_default()
            .push(DayRange::around_event(e, days_before, days_after));
    }
    let plan: Vec<(&str, Vec<DayRange>)> = by_symbol
        .into_iter()
        .map(|(s, r)| (s, merge_day_ranges(r)))
        .collect();

    type Outcome = Result<ManifestFile, ManifestFailure>;
    let results: Vec<Vec<Outcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = plan
            .iter()
            .map(|(symbol, ranges)| {
                scope.spawn(move || {
                    ranges
                        .iter()
                        .map(|range| fetch_range(source, symbol, range, out_dir))
                        .collect::<Vec<Outcome>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fetch thread panicked")).collect()
    });

    let mut files = Vec::new();
    let mut failures = Vec::new();
    for outcome in results.into_iter().flatten() {
        match outcome {
            Ok(f) => files.push(f),
            Err(f) => failures.push(f),
        }
    }
    let event_files = events
        .iter()
        .map(|e| {
            let want = DayRange::around_event(e, days_before, days_after);
            files.iter().position(|f| f.symbol == e.symbol && f.range.covers(&want))
        })
        .collect();
    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        days_before,
        days_after,
        events: events.to_vec(),
        files,
        event_files,
        failures,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE_NAME))?;
    Ok(manifest)
}

fn fetch_range(
    source: &dyn TradeSource,
    symbol: &str,
    range: &DayRange,
    out_dir: &Path,
) -> Result<ManifestFile, ManifestFailure> {
    let failure = |error: String| ManifestFailure {
        symbol: symbol.to_owned(),
        range: *range,
        error,
    };
    let trades = source
        .fetch(symbol, range.start_ms(), range.end_ms())
        .map_err(|e| failure(e.to_string()))?;
    let name = trade_file_name(symbol, range);
    write_atomic(&out_dir.join(&name), |w| write_raw_trades(w, &trades)).map_err(|e| failure(e.to_string()))?;
    info!("{symbol}: {} days, {} trades -> {name}", range.days(), trades.len());
    Ok(ManifestFile {
        symbol: symbol.to_owned(),
        range: *range,
        path: name,
        n_trades: trades.len(),
        fetched_at_ms: Utc::now().timestamp_millis(),
    })
}

/// Trades of the signal day and the days either side of it.
pub fn extract_core_days(manifest: &DatasetManifest, event: &PumpEvent) -> Result<Vec<TradeRecord>, IngestError> {
    if manifest.event_index(event).is_none() {
        return Err(IngestError::EventNotFound {
            symbol: event.symbol.clone(),
            signal_ts_ms: event.signal_ts_ms,
        });
    }
    let core = DayRange::core_days(event);
    let file = manifest
        .files
        .iter()
        .find(|f| f.symbol == event.symbol && f.range.covers(&core))
        .ok_or_else(|| {
            warn!("no stored range of {} covers days {:?}", event.symbol, core);
            IngestError::PartialCoverage {
                symbol: event.symbol.clone(),
                needed: core,
            }
        })?;
    let trades = read_trade_file(&manifest.file_path(file))?;
    let (lo, hi) = (core.start_ms(), core.end_ms());
    Ok(trades.into_iter().filter(|t| t.ts_ms >= lo && t.ts_ms < hi).collect())
}
