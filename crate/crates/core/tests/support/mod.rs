//! Test helpers: an in-process mock of the aggregated-trades endpoint and
//! fixture loaders.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rushwatch::ingest::{read_raw_trade_file, ClientConfig, ExchangeClient, RawTrade};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn mock_trades() -> Vec<RawTrade> {
    read_raw_trade_file(&fixture_path("mock_trades_10k.csv")).unwrap()
}

pub struct MockState {
    pub symbol: String,
    pub trades: Vec<RawTrade>,
    /// Largest page the server hands out.
    pub max_limit: usize,
    /// The next this-many requests get a 503.
    pub fail_next: AtomicUsize,
    /// Trade id left out of `fromId` pages while set.
    pub drop_id: Mutex<Option<u64>>,
    pub requests: AtomicUsize,
}

impl MockState {
    pub fn new(symbol: &str, trades: Vec<RawTrade>) -> Self {
        Self {
            symbol: symbol.to_owned(),
            trades,
            max_limit: 100_000,
            fail_next: AtomicUsize::new(0),
            drop_id: Mutex::new(None),
            requests: AtomicUsize::new(0),
        }
    }
}

pub struct MockExchange {
    pub addr: SocketAddr,
    pub state: Arc<MockState>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockExchange {
    pub fn start(state: MockState) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let state = Arc::new(state);
        let stop = Arc::new(AtomicBool::new(false));
        let (st, sp) = (state.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if sp.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(conn) = conn {
                    let st = st.clone();
                    std::thread::spawn(move || serve(conn, &st));
                }
            }
        });
        Self {
            addr,
            state,
            stop,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// A client aimed at this server with fast retries.
    pub fn client(&self, page_size: usize) -> ExchangeClient {
        ExchangeClient::new(ClientConfig {
            base_url: self.url(),
            page_size,
            requests_per_minute: 600_000,
            max_retries: 4,
            backoff_base_ms: 1,
            timeout_ms: 10_000,
            ..ClientConfig::default()
        })
    }
}

impl Drop for MockExchange {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, state: &MockState) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut first = String::new();
    if reader.read_line(&mut first).is_err() {
        return;
    }
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) if line == "\r\n" || line == "\n" => break,
            Ok(_) => {}
        }
    }
    let target = first.split_whitespace().nth(1).unwrap_or("/");
    let (status, body) = respond(target, state);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        _ => "Service Unavailable",
    };
    let mut out = conn;
    let _ = write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = out.flush();
}

fn respond(target: &str, state: &MockState) -> (u16, String) {
    state.requests.fetch_add(1, Ordering::SeqCst);
    if state
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        return (503, r#"{"msg":"busy"}"#.into());
    }
    let query = target.split_once('?').map_or("", |q| q.1);
    let param = |k: &str| {
        query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .find(|(key, _)| *key == k)
            .map(|(_, v)| v.to_owned())
    };
    if param("symbol").as_deref() != Some(state.symbol.as_str()) {
        return (400, r#"{"code":-1121,"msg":"Invalid symbol."}"#.into());
    }
    let limit = param("limit")
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(500)
        .min(state.max_limit);
    let drop_id = *state.drop_id.lock().unwrap();
    let page: Vec<&RawTrade> = if let Some(from) = param("fromId").and_then(|v| v.parse::<u64>().ok()) {
        state
            .trades
            .iter()
            .filter(|t| t.trade_id >= from && Some(t.trade_id) != drop_id)
            .take(limit)
            .collect()
    } else {
        let start: i64 = param("startTime").and_then(|v| v.parse().ok()).unwrap_or(i64::MIN);
        let end: i64 = param("endTime").and_then(|v| v.parse().ok()).unwrap_or(i64::MAX);
        state
            .trades
            .iter()
            .filter(|t| t.ts_ms >= start && t.ts_ms <= end)
            .take(limit)
            .collect()
    };
    let rows: Vec<String> = page
        .iter()
        .map(|t| {
            format!(
                r#"{{"a":{},"p":"{}","q":"{}","f":{},"l":{},"T":{},"m":{},"M":true}}"#,
                t.trade_id, t.price, t.qty, t.trade_id, t.trade_id, t.ts_ms, !t.is_buy_taker
            )
        })
        .collect();
    (200, format!("[{}]", rows.join(",")))
}

/// In-memory trade source: a quiet series per symbol, with pump bursts at
/// the listed `(symbol, at_ms)` points.
pub struct SynthSource {
    pub pumps: Vec<(String, i64)>,
    pub chunk_seconds: u32,
}

impl rushwatch::ingest::TradeSource for SynthSource {
    fn fetch(
        &self,
        symbol: &str,
        start_ms: i64,
        end_ms: i64,
    ) -> Result<Vec<RawTrade>, rushwatch::ingest::FetchError> {
        use rushwatch::replay::{inject_pump, quiet_series, InjectParams, QuietSeriesParams};
        let seed = symbol.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
        let mut trades = quiet_series(&QuietSeriesParams {
            start_ms,
            duration_s: ((end_ms - start_ms) / 1_000) as u64,
            ..QuietSeriesParams::seeded(seed)
        });
        for (s, at) in &self.pumps {
            if s == symbol && *at >= start_ms && *at < end_ms {
                trades = inject_pump(&trades, &InjectParams::new(*at), self.chunk_seconds).unwrap();
            }
        }
        Ok(trades.iter().map(RawTrade::from).collect())
    }
}
