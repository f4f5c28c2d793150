use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{PumpEvent, TradeRecord};

use super::IngestError;

pub const TRADE_CSV_HEADER: &str = "trade_id,ts_ms,price,qty,is_buy_taker";
pub const EVENTS_CSV_HEADER: &str = "symbol,exchange,signal_ts_ms,group";

/// A trade as received from the exchange, with price and quantity kept as
/// the original decimal strings so persisted files replay bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawTrade {
    pub trade_id: u64,
    pub ts_ms: i64,
    pub price: String,
    pub qty: String,
    pub is_buy_taker: bool,
}

impl RawTrade {
    pub fn to_record(&self) -> Result<TradeRecord, IngestError> {
        let num = |field: &'static str, s: &str| {
            s.trim().parse::<f64>().map_err(|_| IngestError::BadValue {
                field,
                value: s.to_owned(),
            })
        };
        Ok(TradeRecord {
            trade_id: self.trade_id,
            ts_ms: self.ts_ms,
            price: num("price", &self.price)?,
            qty: num("qty", &self.qty)?,
            is_buy_taker: self.is_buy_taker,
        })
    }
}

impl From<&TradeRecord> for RawTrade {
    fn from(t: &TradeRecord) -> Self {
        // `Display` for f64 is the shortest string that parses back exactly
        Self {
            trade_id: t.trade_id,
            ts_ms: t.ts_ms,
            price: t.price.to_string(),
            qty: t.qty.to_string(),
            is_buy_taker: t.is_buy_taker,
        }
    }
}

pub fn write_raw_trades<W: Write>(out: W, trades: &[RawTrade]) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRADE_CSV_HEADER.split(','))?;
    for t in trades {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trade_records<W: Write>(out: W, trades: &[TradeRecord]) -> Result<(), IngestError> {
    let raw: Vec<RawTrade> = trades.iter().map(RawTrade::from).collect();
    write_raw_trades(out, &raw)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(
    path: &Path,
    contents: impl FnOnce(&mut dyn Write) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        contents(&mut buf)?;
        buf.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IngestError::Io(e.error))?;
    Ok(())
}

/// Streams trades out of a trade CSV file. Errors carry the 1-based line
/// number of the offending row.
pub struct TradeFileReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
}

impl TradeFileReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, IngestError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> TradeFileReader<R> {
    pub fn new(input: R) -> Result<Self, IngestError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
        if header != TRADE_CSV_HEADER {
            return Err(IngestError::Malformed {
                line: 1,
                reason: format!("expected header `{TRADE_CSV_HEADER}`, found `{header}`"),
            });
        }
        Ok(Self {
            records: r.into_records(),
        })
    }

    fn parse(rec: &csv::StringRecord) -> Result<RawTrade, String> {
        if rec.len() != 5 {
            return Err(format!("expected 5 fields, found {}", rec.len()));
        }
        let trade_id = rec[0].parse().map_err(|_| format!("bad trade_id `{}`", &rec[0]))?;
        let ts_ms = rec[1].parse().map_err(|_| format!("bad ts_ms `{}`", &rec[1]))?;
        let is_buy_taker = match &rec[4] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(format!("bad is_buy_taker `{other}`")),
        };
        Ok(RawTrade {
            trade_id,
            ts_ms,
            price: rec[2].to_owned(),
            qty: rec[3].to_owned(),
            is_buy_taker,
        })
    }

    pub fn next_raw(&mut self) -> Option<Result<RawTrade, IngestError>> {
        let rec = self.records.next()?;
        Some(match rec {
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                Err(IngestError::Malformed {
                    line,
                    reason: e.to_string(),
                })
            }
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                Self::parse(&rec).map_err(|reason| IngestError::Malformed { line, reason })
            }
        })
    }
}

impl<R: Read> Iterator for TradeFileReader<R> {
    type Item = Result<TradeRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let raw = self.records.next()?;
        let line = match &raw {
            Ok(r) => r.position().map_or(0, |p| p.line()),
            Err(e) => e.position().map_or(0, |p| p.line()),
        };
        let rec = match raw {
            Ok(r) => r,
            Err(e) => {
                return Some(Err(IngestError::Malformed {
                    line,
                    reason: e.to_string(),
                }))
            }
        };
        Some(
            Self::parse(&rec)
                .and_then(|r| {
                    let t = r.to_record().map_err(|e| e.to_string())?;
                    if !(t.price > 0.0) || !(t.qty > 0.0) {
                        return Err(format!("non-positive price or qty: {} {}", r.price, r.qty));
                    }
                    Ok(t)
                })
                .map_err(|reason| IngestError::Malformed { line, reason }),
        )
    }
}

pub fn read_trade_file(path: &Path) -> Result<Vec<TradeRecord>, IngestError> {
    TradeFileReader::open(path)?.collect()
}

pub fn read_raw_trade_file(path: &Path) -> Result<Vec<RawTrade>, IngestError> {
    let mut r = TradeFileReader::open(path)?;
    let mut out = Vec::new();
    while let Some(t) = r.next_raw() {
        out.push(t?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct EventRow {
    symbol: String,
    exchange: String,
    signal_ts_ms: i64,
    group: Option<String>,
}

/// Reads an events file (`symbol,exchange,signal_ts_ms,group`).
pub fn read_events<R: Read>(input: R) -> Result<Vec<PumpEvent>, IngestError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<PumpEvent> = Vec::new();
    for (i, row) in r.deserialize::<EventRow>().enumerate() {
        let row = row?;
        if row.signal_ts_ms <= 0 {
            return Err(IngestError::Malformed {
                line: i as u64 + 2,
                reason: format!("signal_ts_ms must be positive, got {}", row.signal_ts_ms),
            });
        }
        let ev = PumpEvent {
            symbol: row.symbol,
            exchange: row.exchange,
            signal_ts_ms: row.signal_ts_ms,
            group: row.group.filter(|g| !g.is_empty()),
        };
        if out
            .iter()
            .any(|e| e.symbol == ev.symbol && e.signal_ts_ms == ev.signal_ts_ms)
        {
            return Err(IngestError::Malformed {
                line: i as u64 + 2,
                reason: format!("duplicate event {} at {}", ev.symbol, ev.signal_ts_ms),
            });
        }
        out.push(ev);
    }
    Ok(out)
}

pub fn read_events_file(path: &Path) -> Result<Vec<PumpEvent>, IngestError> {
    read_events(BufReader::new(File::open(path)?))
}

pub fn write_events<W: Write>(out: W, events: &[PumpEvent]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_CSV_HEADER.split(','))?;
    for e in events {
        w.write_record([
            e.symbol.as_str(),
            e.exchange.as_str(),
            &e.signal_ts_ms.to_string(),
            e.group.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
