//! Time-ordered trade replay through the live detector, its batch twin, and
//! synthetic series for exercising both.

mod inject;
mod synth;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{Chunk, DetectionAlert, FeatureVector, PipelineConfig, TradeRecord};
use crate::featurize::{featurize_trades, ChunkAccumulator, FeatureEngine, FeaturizeError, RushAggregator};
use crate::ingest::{IngestError, TradeFileReader};
use crate::models::{Model, ModelArtifact, ModelError};

pub use inject::{inject_pump, InjectParams};
pub use synth::{quiet_series, QuietSeriesParams};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("model was built with chunk {model_chunk}s / window {model_window}s, replay uses chunk {chunk}s / window {window}s")]
    ConfigMismatch {
        model_chunk: u32,
        model_window: u32,
        chunk: u32,
        window: u32,
    },
    #[error("injection point {at_ms} lies outside the series [{first_ms}, {last_ms}]")]
    OutOfRange { at_ms: i64, first_ms: i64, last_ms: i64 },
    #[error("invalid injection: {0}")]
    InvalidInjection(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-symbol alert suppression: after an alert at chunk start `t`, nothing
/// for that symbol fires before `t + cooldown`.
#[derive(Debug, Clone, Default)]
pub struct Cooldown {
    cooldown_ms: i64,
    last: HashMap<String, i64>,
}

impl Cooldown {
    pub fn new(cooldown_ms: i64) -> Self {
        Self {
            cooldown_ms,
            last: HashMap::new(),
        }
    }

    /// Records and admits the alert if the symbol is out of cooldown.
    pub fn admit(&mut self, symbol: &str, chunk_start_ms: i64) -> bool {
        match self.last.get_mut(symbol) {
            Some(last) if chunk_start_ms - *last < self.cooldown_ms => false,
            Some(last) => {
                *last = chunk_start_ms;
                true
            }
            None => {
                self.last.insert(symbol.to_owned(), chunk_start_ms);
                true
            }
        }
    }
}

/// Keeps the alerts that survive per-symbol cooldown, in input order.
/// Input must be time-ordered within each symbol.
pub fn apply_cooldown(alerts: Vec<DetectionAlert>, cooldown_ms: i64) -> Vec<DetectionAlert> {
    let mut gate = Cooldown::new(cooldown_ms);
    alerts
        .into_iter()
        .filter(|a| gate.admit(&a.symbol, a.chunk_start_ms))
        .collect()
}

pub(crate) fn check_config(artifact: &ModelArtifact, config: &PipelineConfig) -> Result<(), ReplayError> {
    config.validate().map_err(FeaturizeError::from)?;
    let m = &artifact.config;
    if m.chunk_seconds != config.chunk_seconds
        || m.window_seconds != config.window_seconds
        || m.window_includes_current != config.window_includes_current
    {
        return Err(ReplayError::ConfigMismatch {
            model_chunk: m.chunk_seconds,
            model_window: m.window_seconds,
            chunk: config.chunk_seconds,
            window: config.window_seconds,
        });
    }
    Ok(())
}

/// Live detector for one symbol. Trades go in one at a time; each closed
/// chunk is featurized, scored and, if positive and out of cooldown, turned
/// into an alert.
///
/// Memory is bounded by the window length: see [`Detector::buffered_chunks`].
#[derive(Debug, Clone)]
pub struct Detector {
    symbol: String,
    model_id: String,
    model: Model,
    cooldown_ms: i64,
    last_alert_ms: Option<i64>,
    rush: RushAggregator,
    chunks: ChunkAccumulator,
    engine: FeatureEngine,
    closed: Vec<Chunk>,
    vectors_seen: usize,
}

impl Detector {
    pub fn new(symbol: impl Into<String>, artifact: &ModelArtifact, config: &PipelineConfig) -> Result<Self, ReplayError> {
        check_config(artifact, config)?;
        Ok(Self {
            symbol: symbol.into(),
            model_id: artifact.model_id.clone(),
            model: artifact.model.clone(),
            cooldown_ms: config.cooldown_ms(),
            last_alert_ms: None,
            rush: RushAggregator::new(),
            chunks: ChunkAccumulator::new(config.chunk_seconds),
            engine: FeatureEngine::new(config),
            closed: Vec::new(),
            vectors_seen: 0,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    /// Feeds one trade. Trades must arrive in `(ts_ms, trade_id)` order.
    pub fn push(&mut self, trade: &TradeRecord, alerts: &mut Vec<DetectionAlert>) -> Result<(), ReplayError> {
        if let Some(done) = self.rush.push(trade)? {
            self.chunks.add_rush(&done)?;
        }
        self.chunks.advance_to(trade.ts_ms, &mut self.closed);
        self.chunks.add_trade(trade);
        self.drain_closed(alerts)
    }

    /// Closes the open chunk at end of stream.
    pub fn finish(&mut self, alerts: &mut Vec<DetectionAlert>) -> Result<(), ReplayError> {
        if let Some(done) = self.rush.flush() {
            self.chunks.add_rush(&done)?;
        }
        self.closed.extend(self.chunks.finish());
        self.drain_closed(alerts)
    }

    fn drain_closed(&mut self, alerts: &mut Vec<DetectionAlert>) -> Result<(), ReplayError> {
        for i in 0..self.closed.len() {
            let chunk = self.closed[i];
            if let Some(v) = self.engine.push(&chunk) {
                self.vectors_seen += 1;
                self.score(&v, alerts)?;
            }
        }
        self.closed.clear();
        Ok(())
    }

    fn score(&mut self, v: &FeatureVector, alerts: &mut Vec<DetectionAlert>) -> Result<(), ReplayError> {
        let score = self.model.score(v)?;
        if !self.model.is_positive(score) {
            return Ok(());
        }
        if self
            .last_alert_ms
            .is_some_and(|last| v.chunk_start_ms - last < self.cooldown_ms)
        {
            return Ok(());
        }
        self.last_alert_ms = Some(v.chunk_start_ms);
        alerts.push(DetectionAlert {
            symbol: self.symbol.clone(),
            chunk_start_ms: v.chunk_start_ms,
            score,
            model_id: self.model_id.clone(),
        });
        Ok(())
    }

    /// Chunks currently held by the moving window.
    pub fn buffered_chunks(&self) -> usize {
        self.engine.buffered_chunks()
    }

    /// Feature vectors produced so far (chunks past warm-up).
    pub fn vectors_seen(&self) -> usize {
        self.vectors_seen
    }
}

/// Replays a trade file through a [`Detector`], calling `on_alert` as alerts
/// fire. A malformed line aborts the replay with its line number.
pub fn replay_file(
    path: &Path,
    symbol: &str,
    artifact: &ModelArtifact,
    config: &PipelineConfig,
    mut on_alert: impl FnMut(&DetectionAlert),
) -> Result<Detector, ReplayError> {
    let mut det = Detector::new(symbol, artifact, config)?;
    let mut buf = Vec::new();
    for trade in TradeFileReader::open(path)? {
        det.push(&trade?, &mut buf)?;
        buf.drain(..).for_each(|a| on_alert(&a));
    }
    det.finish(&mut buf)?;
    buf.iter().for_each(&mut on_alert);
    Ok(det)
}

/// Streams a trade file through the detector and collects its alerts.
pub fn replay_detect(
    path: &Path,
    symbol: &str,
    artifact: &ModelArtifact,
    config: &PipelineConfig,
) -> Result<Vec<DetectionAlert>, ReplayError> {
    let mut out = Vec::new();
    replay_file(path, symbol, artifact, config, |a| out.push(a.clone()))?;
    Ok(out)
}

/// Replays several symbols concurrently, each with independent state.
pub fn replay_many(
    jobs: &[(String, std::path::PathBuf)],
    artifact: &ModelArtifact,
    config: &PipelineConfig,
) -> Vec<Result<Vec<DetectionAlert>, ReplayError>> {
    jobs.par_iter()
        .map(|(symbol, path)| replay_detect(path, symbol, artifact, config))
        .collect()
}

/// Batch twin of the streaming detector: featurize the whole series, score
/// every vector, then apply the cooldown. A series shorter than one window
/// yields no alerts.
pub fn batch_detect(
    trades: &[TradeRecord],
    symbol: &str,
    artifact: &ModelArtifact,
    config: &PipelineConfig,
) -> Result<Vec<DetectionAlert>, ReplayError> {
    check_config(artifact, config)?;
    let vectors = match featurize_trades(trades, &[], config) {
        Ok(v) => v,
        Err(FeaturizeError::SeriesTooShort { .. }) => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut positives = Vec::new();
    for v in &vectors {
        let score = artifact.model.score(v)?;
        if artifact.model.is_positive(score) {
            positives.push(DetectionAlert {
                symbol: symbol.to_owned(),
                chunk_start_ms: v.chunk_start_ms,
                score,
                model_id: artifact.model_id.clone(),
            });
        }
    }
    Ok(apply_cooldown(positives, config.cooldown_ms()))
}
