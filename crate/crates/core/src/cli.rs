//! Command-line front end. [`run`] parses arguments, dispatches, and maps
//! the outcome to an exit code.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::domain::{FeatureKind, FeatureVector, PipelineConfig, PumpEvent};
use crate::eval::{build_cv_dataset, kfold_cv, scan_suspects, SplitMode};
use crate::featurize::{featurize_trades, read_feature_csv, write_feature_csv};
use crate::ingest::{
    build_event_dataset, read_events_file, read_trade_file, write_atomic, write_raw_trades, write_trade_records,
    ClientConfig, DatasetManifest, ExchangeClient,
};
use crate::models::{Model, ModelArtifact, ModelSpec};
use crate::replay::{inject_pump, replay_file, InjectParams};

#[derive(Debug, Parser)]
#[command(name = "rushwatch", version, about = "Pump-and-dump detection from exchange trade tapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings. Values come from `--config` when given, then from
/// individual flags.
#[derive(Debug, Clone, Default, Args)]
struct ConfigArgs {
    /// JSON file with chunk_seconds, window_seconds, cooldown_seconds
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chunk width in seconds [default: 25]
    #[arg(long)]
    chunk_seconds: Option<u32>,
    /// Moving-window length in seconds [default: 25200]
    #[arg(long)]
    window_seconds: Option<u32>,
    /// Per-symbol pause after an alert, in seconds [default: 1800]
    #[arg(long)]
    cooldown_seconds: Option<u32>,
    /// Compute each chunk's features from the chunks before it only
    #[arg(long)]
    window_excludes_current: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.chunk_seconds {
            cfg.chunk_seconds = s;
        }
        if let Some(w) = self.window_seconds {
            cfg.window_seconds = w;
        }
        if let Some(c) = self.cooldown_seconds {
            cfg.cooldown_seconds = c;
        }
        if self.window_excludes_current {
            cfg.window_includes_current = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelKind {
    Rf,
    Lr,
    Threshold,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Event,
    Chunk,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "rf")]
    model: ModelKind,
    /// JSON model spec; replaces --model
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the random forest seed
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelSpec> {
        let mut spec = match &self.spec {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .with_context(|| format!("parsing model spec {}", p.display()))?,
            None => match self.model {
                ModelKind::Rf => ModelSpec::random_forest(),
                ModelKind::Lr => ModelSpec::logistic_regression(),
                ModelKind::Threshold => ModelSpec::threshold(),
            },
        };
        if let (Some(seed), ModelSpec::RandomForest(p)) = (self.seed, &mut spec) {
            p.seed = seed;
        }
        Ok(spec)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download the trades of one symbol over a time range
    Fetch {
        #[arg(long)]
        symbol: String,
        /// YYYY-MM-DD (UTC midnight) or epoch milliseconds
        #[arg(long)]
        start: String,
        /// Exclusive end, same formats as --start
        #[arg(long)]
        end: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Download the days around every event of an events file
    Dataset {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        days_before: i64,
        #[arg(long, default_value_t = 7)]
        days_after: i64,
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Turn a trade file into a feature file
    Featurize {
        #[arg(long)]
        trades: PathBuf,
        /// Events used for labels
        #[arg(long)]
        events: Option<PathBuf>,
        /// Only label with events of this symbol
        #[arg(long)]
        symbol: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model on labeled feature files
    Train {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cross-validate a model spec on a dataset's core days
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Fold assignment seed [default: --seed, else 0]
        #[arg(long)]
        fold_seed: Option<u64>,
        #[arg(long, value_enum, default_value = "event")]
        split: SplitArg,
        /// JSON report
        #[arg(long)]
        out: PathBuf,
        /// CSV summary
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stream a trade file through a trained detector, printing alert JSON lines
    Replay {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        symbol: String,
        /// Alert JSONL destination [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Look for unexplained alerts outside the events' core days
    Scan {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        artifact: PathBuf,
        /// Further known events that explain alerts
        #[arg(long)]
        known_events: Option<PathBuf>,
        /// JSON report [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a copy of a trade file with a synthetic pump burst
    Inject {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        at_ms: i64,
        #[arg(long, default_value_t = 10)]
        n_rush: usize,
        #[arg(long, default_value_t = 50.0)]
        scale: f64,
        /// Chunk width used for the median volume
        #[arg(long, default_value_t = 25)]
        chunk_seconds: u32,
    },
}

/// Parses `argv` (program name first) and runs the command. Returns 0 on
/// success, 2 on usage errors and 1 on any other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn parse_time(s: &str) -> Result<i64> {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        return Ok(s.parse()?);
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("bad time `{s}`"))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp_millis())
}

fn client(base_url: Option<String>) -> ExchangeClient {
    let mut cfg = ClientConfig::from_env();
    if let Some(u) = base_url {
        cfg.base_url = u;
    }
    ExchangeClient::new(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fetch {
            symbol,
            start,
            end,
            out,
            base_url,
        } => {
            let (start, end) = (parse_time(&start)?, parse_time(&end)?);
            if end <= start {
                bail!("--end must be after --start");
            }
            let trades = client(base_url).fetch_trades(&symbol, start, end)?;
            write_atomic(&out, |w| write_raw_trades(w, &trades))?;
            info!("{} trades written to {}", trades.len(), out.display());
        }
        Command::Dataset {
            events,
            out,
            days_before,
            days_after,
            base_url,
        } => {
            let events = read_events_file(&events)?;
            let client = client(base_url);
            let m = build_event_dataset(&events, days_before, days_after, &client, &out)?;
            println!(
                "{} files, {} failures, manifest at {}",
                m.files.len(),
                m.failures.len(),
                out.join(crate::ingest::MANIFEST_FILE_NAME).display()
            );
            if !m.failures.is_empty() {
                bail!("{} ranges failed to download", m.failures.len());
            }
        }
        Command::Featurize {
            trades,
            events,
            symbol,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let trades = read_trade_file(&trades)?;
            let mut events: Vec<PumpEvent> = match events {
                Some(p) => read_events_file(&p)?,
                None => Vec::new(),
            };
            if let Some(s) = &symbol {
                events.retain(|e| &e.symbol == s);
            }
            let vectors = featurize_trades(&trades, &events, &cfg)?;
            write_atomic(&out, |w| {
                write_feature_csv(w, &vectors).map_err(|e| io::Error::other(e.to_string()))?;
                Ok(())
            })?;
            info!("{} feature vectors written to {}", vectors.len(), out.display());
        }
        Command::Train {
            features,
            model,
            model_id,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let spec = model.resolve()?;
            let mut vectors: Vec<FeatureVector> = Vec::new();
            for p in &features {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                vectors.extend(read_feature_csv(io::BufReader::new(f))?);
            }
            let trained = spec.train(&vectors)?;
            describe(&trained);
            let id = model_id.unwrap_or_else(|| format!("{}-{}s", spec.name(), cfg.chunk_seconds));
            ModelArtifact::new(id, cfg, trained).save(&out)?;
        }
        Command::Eval {
            manifest,
            model,
            k,
            fold_seed,
            split,
            out,
            csv,
            config,
        } => {
            let cfg = config.resolve()?;
            let spec = model.resolve()?;
            let manifest = DatasetManifest::load(&manifest)?;
            let data = build_cv_dataset(&manifest, &cfg)?;
            let split = match split {
                SplitArg::Event => SplitMode::EventGrouped,
                SplitArg::Chunk => SplitMode::ChunkRandom,
            };
            let fold_seed = fold_seed.or(model.seed).unwrap_or(0);
            let report = kfold_cv(&data, &spec, k, fold_seed, split)?;
            std::fs::write(&out, report.to_json()? + "\n")?;
            if let Some(p) = csv {
                report.write_csv(File::create(p)?)?;
            }
            println!(
                "precision {:.4} recall {:.4} f1 {:.4}",
                report.mean.precision, report.mean.recall, report.mean.f1
            );
        }
        Command::Replay {
            trades,
            artifact,
            symbol,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let artifact = ModelArtifact::load(&artifact)?;
            let mut w = output(out.as_deref())?;
            let mut write_err = None;
            let det = replay_file(&trades, &symbol, &artifact, &cfg, |a| {
                if write_err.is_none() {
                    let r = serde_json::to_writer(&mut w, a)
                        .map_err(io::Error::from)
                        .and_then(|_| w.write_all(b"\n"));
                    write_err = r.err();
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            w.flush()?;
            info!("{} feature vectors scored", det.vectors_seen());
        }
        Command::Scan {
            manifest,
            artifact,
            known_events,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let artifact = ModelArtifact::load(&artifact)?;
            let manifest = DatasetManifest::load(&manifest)?;
            let known = match known_events {
                Some(p) => read_events_file(&p)?,
                None => Vec::new(),
            };
            let report = scan_suspects(&artifact, &manifest, &cfg, &known)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Command::Inject {
            trades,
            out,
            at_ms,
            n_rush,
            scale,
            chunk_seconds,
        } => {
            let base = read_trade_file(&trades)?;
            let params = InjectParams {
                n_rush,
                rush_volume_scale: scale,
                ..InjectParams::new(at_ms)
            };
            let modified = inject_pump(&base, &params, chunk_seconds)?;
            write_atomic(&out, |w| write_trade_records(w, &modified))?;
        }
    }
    Ok(())
}

fn describe(model: &Model) {
    match model {
        Model::RandomForest(m) => {
            let mut imp: Vec<(FeatureKind, f64)> = FeatureKind::ALL.into_iter().zip(m.gini_importance()).collect();
            imp.sort_by(|a, b| b.1.total_cmp(&a.1));
            for (k, v) in imp {
                println!("{:<16} {v:.4}", k.name());
            }
        }
        Model::LogisticRegression(m) => {
            println!(
                "converged {} after {} iterations, loss {:.6} -> {:.6}",
                m.converged, m.iterations, m.initial_loss, m.final_loss
            );
        }
        Model::Threshold(m) => println!("{} >= {}", m.feature.name(), m.threshold),
    }
}
