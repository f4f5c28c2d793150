//! Detectors: random forest, logistic regression, single-feature threshold,
//! and the hourly-candle baseline.

mod forest;
mod kamps;
mod logreg;
mod matrix;
mod threshold;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FeatureKind, FeatureVector, PipelineConfig};

pub use forest::{
    train_random_forest, train_random_forest_with, ClassWeight, DecisionTree, Execution, ForestModel, Node, RfParams,
};
pub use kamps::{build_candles, kamps_detect, Candle, KampsConfig, KampsPreset, DEFAULT_LOOKBACK_HOURS, HOUR_MS};
pub use logreg::{train_logreg, LogisticObjective, LrModel, LrParams, Standardizer};
pub use matrix::FeatureMatrix;
pub use threshold::{
    fit_threshold_detector, fit_threshold_scores, pr_at_threshold, PrCurve, PrPoint, ThresholdModel,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyInput,
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite; check feature scaling")]
    NonFiniteLoss,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("series has {len} candles, needs at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("input not sorted by time")]
    Unsorted,
    #[error("unsupported artifact format version {0}")]
    UnsupportedVersion(u32),
    #[error("artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_labels(x: &FeatureMatrix, y: &[bool]) -> Result<(), ModelError> {
    if x.rows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::DegenerateLabels);
    }
    Ok(())
}

/// What to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(RfParams),
    LogisticRegression(LrParams),
    Threshold { feature: FeatureKind },
}

impl ModelSpec {
    pub fn random_forest() -> Self {
        ModelSpec::RandomForest(RfParams::default())
    }

    pub fn logistic_regression() -> Self {
        ModelSpec::LogisticRegression(LrParams::default())
    }

    pub fn threshold() -> Self {
        ModelSpec::Threshold {
            feature: FeatureKind::StdRushOrders,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::RandomForest(_) => "random_forest",
            ModelSpec::LogisticRegression(_) => "logistic_regression",
            ModelSpec::Threshold { .. } => "threshold",
        }
    }

    pub fn train(&self, vectors: &[FeatureVector]) -> Result<Model, ModelError> {
        let y: Vec<bool> = vectors.iter().map(|v| v.label).collect();
        Ok(match self {
            ModelSpec::RandomForest(p) => {
                Model::RandomForest(train_random_forest(&FeatureMatrix::from_vectors(vectors), &y, p)?)
            }
            ModelSpec::LogisticRegression(p) => {
                Model::LogisticRegression(train_logreg(&FeatureMatrix::from_vectors(vectors), &y, p)?)
            }
            ModelSpec::Threshold { feature } => Model::Threshold(fit_threshold_detector(vectors, *feature)?.0),
        })
    }
}

/// A trained detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    RandomForest(ForestModel),
    LogisticRegression(LrModel),
    Threshold(ThresholdModel),
}

impl Model {
    /// Forest and regression scores are probabilities; the threshold model
    /// scores with the raw feature value.
    pub fn score(&self, v: &FeatureVector) -> Result<f64, ModelError> {
        match self {
            Model::RandomForest(m) => m.predict_row(&v.features()),
            Model::LogisticRegression(m) => m.predict_row(&v.features()),
            Model::Threshold(m) => Ok(m.score(v)),
        }
    }

    pub fn is_positive(&self, score: f64) -> bool {
        match self {
            Model::RandomForest(_) | Model::LogisticRegression(_) => score >= 0.5,
            Model::Threshold(m) => score >= m.threshold,
        }
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<bool, ModelError> {
        Ok(self.is_positive(self.score(v)?))
    }
}

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Serialized model plus the pipeline settings its features were built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub model_id: String,
    pub config: PipelineConfig,
    pub model: Model,
}

impl ModelArtifact {
    pub fn new(model_id: impl Into<String>, config: PipelineConfig, model: Model) -> Self {
        Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            model_id: model_id.into(),
            config,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let a: Self = serde_json::from_str(s)?;
        a.check_version()
    }

    fn check_version(self) -> Result<Self, ModelError> {
        if self.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(self.format_version));
        }
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let a: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        a.check_version()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vectors() -> Vec<FeatureVector> {
        (0..60)
            .map(|i| {
                let pos = i % 10 == 0;
                let x = if pos { 50.0 + i as f64 } else { (i % 7) as f64 };
                FeatureVector::from_array(i, [x, x / 2.0, 1.0, 2.0, 3.0, 0.1, 1.0, 1.1, 0.9], pos)
            })
            .collect()
    }

    #[test]
    fn artifacts_roundtrip_for_every_kind() {
        let vs = vectors();
        let specs = [
            ModelSpec::RandomForest(RfParams {
                n_trees: 5,
                min_samples_leaf: 2,
                ..RfParams::default()
            }),
            ModelSpec::logistic_regression(),
            ModelSpec::threshold(),
        ];
        for spec in specs {
            let model = spec.train(&vs).unwrap();
            let art = ModelArtifact::new(spec.name(), PipelineConfig::default(), model);
            let json = art.to_json().unwrap();
            let back = ModelArtifact::from_json(&json).unwrap();
            assert_eq!(back, art);
            for v in &vs {
                assert_eq!(back.model.predict(v).unwrap(), v.label, "{}", spec.name());
            }
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let art = ModelArtifact::new(
            "t",
            PipelineConfig::default(),
            Model::Threshold(ThresholdModel::new(FeatureKind::StdRushOrders, 1.0)),
        );
        let json = art.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            ModelArtifact::from_json(&json),
            Err(ModelError::UnsupportedVersion(9))
        ));
    }
}
