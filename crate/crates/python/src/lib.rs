//! Python bindings. Trades cross the boundary as
//! `(trade_id, ts_ms, price, qty, is_buy_taker)` tuples and feature vectors
//! as dicts keyed by feature name.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rushwatch::domain::{DetectionAlert, FeatureKind, FeatureVector, PipelineConfig, PumpEvent, TradeRecord};
use rushwatch::eval;
use rushwatch::featurize as feat;
use rushwatch::ingest;
use rushwatch::models::{self, KampsConfig, KampsPreset, Model, ModelArtifact, ModelSpec};
use rushwatch::replay;

type TradeTuple = (u64, i64, f64, f64, bool);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn to_records(trades: Vec<TradeTuple>) -> Vec<TradeRecord> {
    trades
        .into_iter()
        .map(|(id, ts, p, q, b)| TradeRecord::new(id, ts, p, q, b))
        .collect()
}

fn to_tuples(trades: &[TradeRecord]) -> Vec<TradeTuple> {
    trades
        .iter()
        .map(|t| (t.trade_id, t.ts_ms, t.price, t.qty, t.is_buy_taker))
        .collect()
}

fn vector_to_dict<'py>(py: Python<'py>, v: &FeatureVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("chunk_start_ms", v.chunk_start_ms)?;
    for (k, x) in FeatureKind::ALL.iter().zip(v.features()) {
        d.set_item(k.name(), x)?;
    }
    d.set_item("label", v.label)?;
    Ok(d)
}

fn dict_to_vector(d: &Bound<'_, PyDict>) -> PyResult<FeatureVector> {
    let get = |key: &str| -> PyResult<Bound<'_, PyAny>> {
        d.get_item(key)?
            .ok_or_else(|| value_err(format!("feature dict lacks {key:?}")))
    };
    let mut f = [0.0; rushwatch::domain::N_FEATURES];
    for (slot, k) in f.iter_mut().zip(FeatureKind::ALL) {
        *slot = get(k.name())?.extract()?;
    }
    let label = match d.get_item("label")? {
        Some(l) => l.extract()?,
        None => false,
    };
    Ok(FeatureVector::from_array(get("chunk_start_ms")?.extract()?, f, label))
}

fn alert_to_dict<'py>(py: Python<'py>, a: &DetectionAlert) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("symbol", &a.symbol)?;
    d.set_item("chunk_start_ms", a.chunk_start_ms)?;
    d.set_item("score", a.score)?;
    d.set_item("model_id", &a.model_id)?;
    Ok(d)
}

/// Chunk, window and cooldown settings.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (chunk_seconds=25, window_seconds=25_200, cooldown_seconds=1_800, window_includes_current=true))]
    fn new(
        chunk_seconds: u32,
        window_seconds: u32,
        cooldown_seconds: u32,
        window_includes_current: bool,
    ) -> PyResult<Self> {
        let inner = PipelineConfig {
            chunk_seconds,
            window_seconds,
            cooldown_seconds,
            window_includes_current,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn chunk_seconds(&self) -> u32 {
        self.inner.chunk_seconds
    }

    #[getter]
    fn window_seconds(&self) -> u32 {
        self.inner.window_seconds
    }

    #[getter]
    fn cooldown_seconds(&self) -> u32 {
        self.inner.cooldown_seconds
    }

    #[getter]
    fn window_chunks(&self) -> usize {
        self.inner.window_chunks()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(chunk_seconds={}, window_seconds={}, cooldown_seconds={}, window_includes_current={})",
            c.chunk_seconds,
            c.window_seconds,
            c.cooldown_seconds,
            if c.window_includes_current { "True" } else { "False" }
        )
    }
}

/// A trained detector bound to the config it was trained with.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelArtifact,
}

#[pymethods]
impl PyModel {
    /// Trains `kind` ("rf", "lr" or "threshold") on feature dicts.
    #[staticmethod]
    #[pyo3(signature = (kind, vectors, config, model_id="model", seed=0))]
    fn train(
        kind: &str,
        vectors: Vec<Bound<'_, PyDict>>,
        config: &PyConfig,
        model_id: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let vs = vectors.iter().map(dict_to_vector).collect::<PyResult<Vec<_>>>()?;
        let spec = match kind {
            "rf" => {
                let mut s = ModelSpec::random_forest();
                if let ModelSpec::RandomForest(p) = &mut s {
                    p.seed = seed;
                }
                s
            }
            "lr" => ModelSpec::logistic_regression(),
            "threshold" => ModelSpec::threshold(),
            other => return Err(value_err(format!("unknown model kind {other:?}"))),
        };
        let model = spec.train(&vs).map_err(value_err)?;
        Ok(Self {
            inner: ModelArtifact::new(model_id, config.inner, model),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ModelArtifact::load(&path).map_err(io_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(io_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ModelArtifact::from_json(text).map_err(value_err)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.model {
            Model::RandomForest(_) => "rf",
            Model::LogisticRegression(_) => "lr",
            Model::Threshold(_) => "threshold",
        }
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.inner.config,
        }
    }

    fn score(&self, vector: &Bound<'_, PyDict>) -> PyResult<f64> {
        self.inner.model.score(&dict_to_vector(vector)?).map_err(value_err)
    }

    fn predict(&self, vector: &Bound<'_, PyDict>) -> PyResult<bool> {
        self.inner.model.predict(&dict_to_vector(vector)?).map_err(value_err)
    }

    /// Gini importances by feature name; forests only.
    fn feature_importances(&self) -> PyResult<Vec<(&'static str, f64)>> {
        match &self.inner.model {
            Model::RandomForest(f) => Ok(FeatureKind::ALL.iter().map(|k| k.name()).zip(f.gini_importance()).collect()),
            _ => Err(value_err("feature importances exist for forests only")),
        }
    }

    /// Cooldown-gated alerts over an in-memory trade series.
    fn detect<'py>(&self, py: Python<'py>, trades: Vec<TradeTuple>, symbol: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let trades = to_records(trades);
        let alerts = py
            .detach(|| replay::batch_detect(&trades, symbol, &self.inner, &self.inner.config))
            .map_err(value_err)?;
        alerts.iter().map(|a| alert_to_dict(py, a)).collect()
    }

    /// Streams a trade CSV through the online detector.
    fn replay_file<'py>(&self, py: Python<'py>, path: PathBuf, symbol: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let alerts = py
            .detach(|| replay::replay_detect(&path, symbol, &self.inner, &self.inner.config))
            .map_err(value_err)?;
        alerts.iter().map(|a| alert_to_dict(py, a)).collect()
    }
}

#[pyfunction]
fn read_trades(path: PathBuf) -> PyResult<Vec<TradeTuple>> {
    Ok(to_tuples(&ingest::read_trade_file(&path).map_err(io_err)?))
}

#[pyfunction]
fn write_trades(path: PathBuf, trades: Vec<TradeTuple>) -> PyResult<()> {
    let file = std::fs::File::create(&path).map_err(io_err)?;
    ingest::write_trade_records(file, &to_records(trades)).map_err(io_err)
}

/// Buy-taker trades merged per millisecond: `(ts_ms, quote_volume, n_fills)`.
#[pyfunction]
fn infer_rush_orders(trades: Vec<TradeTuple>) -> PyResult<Vec<(i64, f64, u32)>> {
    let rush = feat::infer_rush_orders(&to_records(trades)).map_err(value_err)?;
    Ok(rush.iter().map(|r| (r.ts_ms, r.quote_volume, r.n_fills)).collect())
}

/// Feature dicts for every chunk with a full window. `events` are
/// `(symbol, signal_ts_ms)` pairs used for labels.
#[pyfunction]
#[pyo3(signature = (trades, config, events=Vec::new()))]
fn featurize<'py>(
    py: Python<'py>,
    trades: Vec<TradeTuple>,
    config: &PyConfig,
    events: Vec<(String, i64)>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let trades = to_records(trades);
    let events: Vec<PumpEvent> = events.into_iter().map(|(s, t)| PumpEvent::new(s, "binance", t)).collect();
    let vectors = py
        .detach(|| feat::featurize_trades(&trades, &events, &config.inner))
        .map_err(value_err)?;
    vectors.iter().map(|v| vector_to_dict(py, v)).collect()
}

/// `(precision, recall, f1)` of boolean predictions.
#[pyfunction]
fn precision_recall_f1(predicted: Vec<bool>, actual: Vec<bool>) -> PyResult<(f64, f64, f64)> {
    let m = eval::precision_recall_f1(&predicted, &actual).map_err(value_err)?;
    Ok((m.precision, m.recall, m.f1))
}

/// F1-maximizing cut on raw scores, with the curve as
/// `(threshold, precision, recall)` rows.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn fit_threshold(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(f64, Vec<(f64, f64, f64)>)> {
    let (t, curve) = models::fit_threshold_scores(&scores, &labels).map_err(value_err)?;
    Ok((t, curve.points.iter().map(|p| (p.threshold, p.precision, p.recall)).collect()))
}

#[pyfunction]
#[pyo3(signature = (seed, hours=12, trades_per_second=0.2, price=0.001))]
fn quiet_series(seed: u64, hours: u64, trades_per_second: f64, price: f64) -> Vec<TradeTuple> {
    to_tuples(&replay::quiet_series(&replay::QuietSeriesParams {
        duration_s: hours * 3_600,
        trades_per_second,
        price,
        ..replay::QuietSeriesParams::seeded(seed)
    }))
}

#[pyfunction]
#[pyo3(signature = (trades, at_ms, scale=50.0, n_rush=10, chunk_seconds=25))]
fn inject_pump(trades: Vec<TradeTuple>, at_ms: i64, scale: f64, n_rush: usize, chunk_seconds: u32) -> PyResult<Vec<TradeTuple>> {
    let params = replay::InjectParams {
        n_rush,
        ..replay::InjectParams::new(at_ms).with_scale(scale)
    };
    let out = replay::inject_pump(&to_records(trades), &params, chunk_seconds).map_err(value_err)?;
    Ok(to_tuples(&out))
}

/// Hourly candle flags of the price-and-volume baseline.
#[pyfunction]
#[pyo3(signature = (trades, preset="balanced", lookback=models::DEFAULT_LOOKBACK_HOURS))]
fn kamps_detect(trades: Vec<TradeTuple>, preset: &str, lookback: usize) -> PyResult<Vec<(i64, bool)>> {
    let preset = match preset {
        "initial" => KampsPreset::Initial,
        "balanced" => KampsPreset::Balanced,
        "strict" => KampsPreset::Strict,
        other => return Err(value_err(format!("unknown preset {other:?}"))),
    };
    let candles = models::build_candles(&to_records(trades), models::HOUR_MS).map_err(value_err)?;
    let flags = models::kamps_detect(&candles, &KampsConfig::preset(preset, lookback)).map_err(value_err)?;
    Ok(candles.iter().map(|c| c.start_ms).zip(flags).collect())
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FeatureKind::ALL.iter().map(|k| k.name()).collect()
}

#[pymodule]
fn pyrushwatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_trades, m)?)?;
    m.add_function(wrap_pyfunction!(write_trades, m)?)?;
    m.add_function(wrap_pyfunction!(infer_rush_orders, m)?)?;
    m.add_function(wrap_pyfunction!(featurize, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_f1, m)?)?;
    m.add_function(wrap_pyfunction!(fit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(quiet_series, m)?)?;
    m.add_function(wrap_pyfunction!(inject_pump, m)?)?;
    m.add_function(wrap_pyfunction!(kamps_detect, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    Ok(())
}
