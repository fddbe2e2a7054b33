//! Series → features → chronological split → normalization → segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{build_feature_matrix, FeatureMatrix, IndicatorError, IndicatorParams};
use crate::market_data::{MarketDataError, Normalizer, PriceSeries};
use crate::windowing::{make_segments, SegmentSet, WindowError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// Which rows the min/max scaler is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeOn {
    #[default]
    Train,
    /// Fit on every row; leaks test range into training.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub window: usize,
    pub horizon: usize,
    pub normalize_on: NormalizeOn,
    pub indicators: IndicatorParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            window: 3,
            horizon: 1,
            normalize_on: NormalizeOn::Train,
            indicators: IndicatorParams::default(),
        }
    }
}

/// Normalized train/test segments plus everything needed to map back to prices.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: FeatureMatrix,
    pub normalizer: Normalizer,
    pub train: SegmentSet,
    pub test: SegmentSet,
}

pub fn prepare(series: &PriceSeries, cfg: &DataConfig) -> Result<Prepared, PipelineError> {
    if cfg.window < 1 || cfg.horizon < 1 {
        return Err(PipelineError::Config("window and horizon must be >= 1".into()));
    }
    let features = build_feature_matrix(series, &cfg.indicators)?;
    let (train_fm, test_fm) = features.split(cfg.train_fraction)?;
    if train_fm.rows() == 0 {
        return Err(PipelineError::Config("train split is empty".into()));
    }
    let normalizer = match cfg.normalize_on {
        NormalizeOn::Train => Normalizer::fit(train_fm.view(), train_fm.close_column_index, "train")?,
        NormalizeOn::Full => Normalizer::fit(features.view(), features.close_column_index, "full")?,
    };
    let train_fm = train_fm.with_values(normalizer.normalize(train_fm.view())?);
    let test_fm = test_fm.with_values(normalizer.normalize(test_fm.view())?);
    let train = make_segments(&train_fm, cfg.window, cfg.horizon)?;
    let test = make_segments(&test_fm, cfg.window, cfg.horizon)?;
    Ok(Prepared {
        features,
        normalizer,
        train,
        test,
    })
}

/// Naive forecast repeating the last observed close for every horizon step
/// (normalized units).
pub fn persistence_predictions(segments: &SegmentSet) -> Vec<Vec<f64>> {
    segments
        .segments
        .iter()
        .map(|s| vec![*s.hist_closes.last().expect("window >= 1"); s.target.len()])
        .collect()
}
