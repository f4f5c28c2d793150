use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DetectionAlert, PipelineConfig, PumpEvent};
use crate::featurize::{featurize_trades, FeaturizeError};
use crate::ingest::{read_trade_file, DatasetManifest, DayRange, ManifestFile};
use crate::models::ModelArtifact;
use crate::replay::{check_config, Cooldown};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub model_id: String,
    pub config: PipelineConfig,
    pub files_scanned: usize,
    /// Alerts within one chunk of a known event.
    pub matched: Vec<DetectionAlert>,
    /// Alerts no known event explains.
    pub suspects: Vec<DetectionAlert>,
}

/// Runs the detector over every stored day outside the events' core days
/// (signal day ± 1). Features are computed over whole files so windows are
/// warm at the edges of the scanned span; cooldown is applied per symbol
/// across that symbol's files. An alert within one chunk of an event in
/// `known` or in the manifest counts as matched.
pub fn scan_suspects(
    artifact: &ModelArtifact,
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    known: &[PumpEvent],
) -> Result<ScanReport, EvalError> {
    check_config(artifact, config)?;
    let mut by_symbol: BTreeMap<&str, Vec<&ManifestFile>> = BTreeMap::new();
    for f in &manifest.files {
        by_symbol.entry(f.symbol.as_str()).or_default().push(f);
    }
    let per_symbol: Vec<Result<Vec<DetectionAlert>, EvalError>> = by_symbol
        .into_par_iter()
        .map(|(symbol, mut files)| {
            files.sort_by_key(|f| f.range);
            let core: Vec<DayRange> = manifest
                .events_for(symbol)
                .into_iter()
                .map(DayRange::core_days)
                .collect();
            let mut gate = Cooldown::new(config.cooldown_ms());
            let mut out = Vec::new();
            for file in files {
                let trades = read_trade_file(&manifest.file_path(file))?;
                let vectors = match featurize_trades(&trades, &[], config) {
                    Ok(v) => v,
                    Err(FeaturizeError::SeriesTooShort { .. } | FeaturizeError::EmptyInput) => continue,
                    Err(e) => return Err(e.into()),
                };
                for v in &vectors {
                    if core.iter().any(|r| r.contains_ms(v.chunk_start_ms)) {
                        continue;
                    }
                    let score = artifact.model.score(v)?;
                    if artifact.model.is_positive(score) && gate.admit(symbol, v.chunk_start_ms) {
                        out.push(DetectionAlert {
                            symbol: symbol.to_owned(),
                            chunk_start_ms: v.chunk_start_ms,
                            score,
                            model_id: artifact.model_id.clone(),
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let chunk_ms = config.chunk_ms();
    let explained = |a: &DetectionAlert| {
        manifest.events.iter().chain(known).any(|e| {
            e.symbol == a.symbol && (a.chunk_start_ms - config.chunk_floor(e.signal_ts_ms)).abs() <= chunk_ms
        })
    };
    let mut report = ScanReport {
        model_id: artifact.model_id.clone(),
        config: *config,
        files_scanned: manifest.files.len(),
        matched: Vec::new(),
        suspects: Vec::new(),
    };
    for alerts in per_symbol {
        for a in alerts? {
            if explained(&a) {
                report.matched.push(a);
            } else {
                report.suspects.push(a);
            }
        }
    }
    Ok(report)
}
