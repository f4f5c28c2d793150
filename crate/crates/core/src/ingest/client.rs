//! Paginated client for an aggregated-trades REST endpoint.
//!
//! The first page is located by probing `startTime`/`endTime` windows; the
//! rest follow the `fromId` cursor until a trade at or past `end_ms` shows up
//! or a short page signals the end of the available history.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::files::RawTrade;

/// Which JSON keys hold each trade field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub id: String,
    pub price: String,
    pub qty: String,
    pub ts: String,
    pub side: String,
    /// The side flag reports "buyer was maker" and must be negated.
    pub side_is_buyer_maker: bool,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: "a".into(),
            price: "p".into(),
            qty: "q".into(),
            ts: "T".into(),
            side: "m".into(),
            side_is_buyer_maker: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub base_url: String,
    pub path: String,
    pub page_size: usize,
    pub requests_per_minute: u32,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Width of the `startTime`/`endTime` probe used to find the first trade.
    pub probe_window_ms: i64,
    pub timeout_ms: u64,
    /// Treat a jump in consecutive trade ids as a gap.
    pub require_contiguous_ids: bool,
    pub fields: FieldMap,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.binance.com".into(),
            path: "/api/v3/aggTrades".into(),
            page_size: 1000,
            requests_per_minute: 1200,
            max_retries: 5,
            backoff_base_ms: 500,
            probe_window_ms: 3_600_000,
            timeout_ms: 30_000,
            require_contiguous_ids: true,
            fields: FieldMap::default(),
        }
    }
}

impl ClientConfig {
    /// Defaults overridden by `RUSHWATCH_BASE_URL`, `RUSHWATCH_RPM`,
    /// `RUSHWATCH_PAGE_SIZE` and `RUSHWATCH_RETRIES`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(v) = std::env::var("RUSHWATCH_BASE_URL") {
            c.base_url = v;
        }
        if let Some(v) = env_num("RUSHWATCH_RPM") {
            c.requests_per_minute = v;
        }
        if let Some(v) = env_num("RUSHWATCH_PAGE_SIZE") {
            c.page_size = v;
        }
        if let Some(v) = env_num("RUSHWATCH_RETRIES") {
            c.max_retries = v;
        }
        c
    }
}

fn env_num<T: std::str::FromStr>(key: &str) -> Option<T> {
    let v = std::env::var(key).ok()?;
    match v.parse() {
        Ok(n) => Some(n),
        Err(_) => {
            warn!("ignoring unparsable {key}={v}");
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchErrorKind {
    #[error("retries exhausted: {0}")]
    NetworkExhausted(String),
    #[error("symbol rejected by endpoint (HTTP {status})")]
    SymbolUnknown { status: u16 },
    #[error("trade id gap: expected {expected}, got {got}")]
    GapDetected { expected: u64, got: u64 },
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// State needed to continue an aborted fetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchCheckpoint {
    pub symbol: String,
    pub start_ms: i64,
    pub end_ms: i64,
    /// Next probe window start while the first trade is still unknown.
    pub probe_from_ms: i64,
    pub next_from_id: Option<u64>,
    pub trades: Vec<RawTrade>,
}

#[derive(Debug, Clone, Error)]
#[error("fetching {} failed: {kind}", checkpoint.symbol)]
pub struct FetchError {
    pub kind: FetchErrorKind,
    pub checkpoint: Box<FetchCheckpoint>,
}

/// Spaces request starts at least `60 / rpm` seconds apart, across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(rpm: u32) -> Self {
        let interval = if rpm == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(rpm))
        };
        Self {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Anything that can produce the trades of `symbol` in `[start_ms, end_ms)`.
pub trait TradeSource: Sync {
    fn fetch(&self, symbol: &str, start_ms: i64, end_ms: i64) -> Result<Vec<RawTrade>, FetchError>;
}

#[derive(Debug, Clone)]
pub struct ExchangeClient {
    config: ClientConfig,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
}

enum Attempt {
    Page(Vec<RawTrade>),
    Retry(String),
    Fatal(FetchErrorKind),
}

impl ExchangeClient {
    pub fn new(config: ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .new_agent();
        let limiter = Arc::new(RateLimiter::per_minute(config.requests_per_minute));
        Self {
            config,
            agent,
            limiter,
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Exchange symbol for a pair written as `BASE/QUOTE`.
    pub fn api_symbol(symbol: &str) -> String {
        symbol.replace(['/', '-', '_'], "").to_uppercase()
    }

    /// All trades in `[start_ms, end_ms)`, sorted by id.
    pub fn fetch_trades(&self, symbol: &str, start_ms: i64, end_ms: i64) -> Result<Vec<RawTrade>, FetchError> {
        self.resume(FetchCheckpoint {
            symbol: symbol.to_owned(),
            start_ms,
            end_ms,
            probe_from_ms: start_ms,
            next_from_id: None,
            trades: Vec::new(),
        })
    }

    /// Continues a fetch from a checkpoint returned in a [`FetchError`].
    pub fn resume(&self, mut cp: FetchCheckpoint) -> Result<Vec<RawTrade>, FetchError> {
        let api_symbol = Self::api_symbol(&cp.symbol);
        let fail = |kind, cp: &FetchCheckpoint| FetchError {
            kind,
            checkpoint: Box::new(cp.clone()),
        };

        while cp.next_from_id.is_none() {
            if cp.probe_from_ms >= cp.end_ms {
                return Ok(cp.trades);
            }
            let win_end = (cp.probe_from_ms + self.config.probe_window_ms).min(cp.end_ms) - 1;
            let query = [
                ("symbol", api_symbol.clone()),
                ("startTime", cp.probe_from_ms.to_string()),
                ("endTime", win_end.to_string()),
                ("limit", "1".to_owned()),
            ];
            let page = self.get_page(&query).map_err(|k| fail(k, &cp))?;
            match page.first() {
                Some(first) => cp.next_from_id = Some(first.trade_id),
                None => cp.probe_from_ms = win_end + 1,
            }
        }

        loop {
            let from = cp.next_from_id.expect("cursor set after probing");
            let query = [
                ("symbol", api_symbol.clone()),
                ("fromId", from.to_string()),
                ("limit", self.config.page_size.to_string()),
            ];
            let page = self.get_page(&query).map_err(|k| fail(k, &cp))?;
            let full = page.len() >= self.config.page_size;
            let mut expected = from;
            for t in page {
                if self.config.require_contiguous_ids && t.trade_id != expected {
                    return Err(fail(
                        FetchErrorKind::GapDetected {
                            expected,
                            got: t.trade_id,
                        },
                        &cp,
                    ));
                }
                expected = t.trade_id + 1;
                if t.ts_ms >= cp.end_ms {
                    return Ok(cp.trades);
                }
                if t.ts_ms >= cp.start_ms {
                    cp.trades.push(t);
                }
                cp.next_from_id = Some(expected);
            }
            if !full {
                return Ok(cp.trades);
            }
            debug!("{} page done, next id {expected}", cp.symbol);
        }
    }

    fn get_page(&self, query: &[(&str, String)]) -> Result<Vec<RawTrade>, FetchErrorKind> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(backoff));
            }
            self.limiter.acquire();
            match self.try_page(query) {
                Attempt::Page(p) => return Ok(p),
                Attempt::Fatal(k) => return Err(k),
                Attempt::Retry(msg) => {
                    warn!("request failed (attempt {}): {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(FetchErrorKind::NetworkExhausted(last))
    }

    fn try_page(&self, query: &[(&str, String)]) -> Attempt {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), self.config.path);
        let mut req = self.agent.get(&url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = match req.call() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if status == 429 || status == 418 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if status >= 400 {
            return Attempt::Fatal(FetchErrorKind::SymbolUnknown { status });
        }
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match parse_page(&body, &self.config.fields) {
            Ok(p) => Attempt::Page(p),
            Err(e) => Attempt::Fatal(FetchErrorKind::Malformed(e)),
        }
    }
}

impl TradeSource for ExchangeClient {
    fn fetch(&self, symbol: &str, start_ms: i64, end_ms: i64) -> Result<Vec<RawTrade>, FetchError> {
        self.fetch_trades(symbol, start_ms, end_ms)
    }
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn int_of<T: TryFrom<i64> + std::str::FromStr>(v: &Value) -> Option<T> {
    match v {
        Value::Number(n) => n.as_i64().and_then(|i| T::try_from(i).ok()),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Parses one JSON page (an array of trade objects) using `fields`.
pub fn parse_page(body: &str, fields: &FieldMap) -> Result<Vec<RawTrade>, String> {
    let rows: Vec<serde_json::Map<String, Value>> = serde_json::from_str(body).map_err(|e| e.to_string())?;
    rows.iter()
        .map(|row| {
            let get = |k: &str| row.get(k).ok_or_else(|| format!("missing field `{k}`"));
            let side = get(&fields.side)?
                .as_bool()
                .ok_or_else(|| format!("field `{}` is not a boolean", fields.side))?;
            Ok(RawTrade {
                trade_id: int_of(get(&fields.id)?).ok_or("bad trade id")?,
                ts_ms: int_of(get(&fields.ts)?).ok_or("bad timestamp")?,
                price: text_of(get(&fields.price)?).ok_or("bad price")?,
                qty: text_of(get(&fields.qty)?).ok_or("bad qty")?,
                is_buy_taker: side != fields.side_is_buyer_maker,
            })
        })
        .collect()
}
