//! Technical indicators and the 14-column raw feature matrix.
//!
//! Windowed indicators return `Option<f64>` per position; `None` marks the
//! warm-up prefix where the window is not yet full.

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::PriceSeries;

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("close price at position {index} is {value}; log momentum needs positive prices")]
    Domain { index: usize, value: f64 },
    #[error("insufficient data: {got} bars, at least {required} required")]
    InsufficientData { required: usize, got: usize },
    #[error("empty input")]
    Empty,
}

/// Column labels produced by [`build_feature_matrix`], in order.
pub const FEATURE_NAMES: [&str; 14] = [
    "Open",
    "High",
    "Low",
    "Close",
    "AdjClose",
    "Volume",
    "MA7",
    "MA21",
    "MACD",
    "EMA12",
    "LogMomentum",
    "BollingerUpper",
    "BollingerMiddle",
    "BollingerLower",
];

/// Index of the close column in [`FEATURE_NAMES`].
pub const CLOSE_COLUMN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorParams {
    pub ma_short: usize,
    pub ma_long: usize,
    pub ema_span: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub bollinger_window: usize,
    pub bollinger_k: f64,
    pub momentum_lag: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            ma_short: 7,
            ma_long: 21,
            ema_span: 12,
            macd_fast: 12,
            macd_slow: 26,
            bollinger_window: 21,
            bollinger_k: 2.0,
            momentum_lag: 1,
        }
    }
}

impl IndicatorParams {
    /// Number of leading rows dropped so every column is defined.
    ///
    /// The MACD slow EMA is counted as warmed up after `macd_slow - 1` steps
    /// even though the recurrence itself is defined from the first bar.
    pub fn warm_up(&self) -> usize {
        [
            self.ma_short - 1,
            self.ma_long - 1,
            self.bollinger_window - 1,
            self.macd_slow - 1,
            self.macd_fast - 1,
            self.momentum_lag,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    /// Smallest series length that leaves one row after warm-up.
    pub fn min_bars(&self) -> usize {
        self.warm_up() + 1
    }

    pub fn validate(&self) -> Result<(), IndicatorError> {
        let positive = [
            ("ma_short", self.ma_short),
            ("ma_long", self.ma_long),
            ("ema_span", self.ema_span),
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("momentum_lag", self.momentum_lag),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(IndicatorError::Parameter(format!("{name} must be >= 1")));
            }
        }
        if self.bollinger_window < 2 {
            return Err(IndicatorError::Parameter("bollinger_window must be >= 2".into()));
        }
        if !(self.bollinger_k >= 0.0) {
            return Err(IndicatorError::Parameter("bollinger_k must be >= 0".into()));
        }
        Ok(())
    }
}

/// Simple moving average over the trailing `n` values.
pub fn sma(x: &[f64], n: usize) -> Result<Vec<Option<f64>>, IndicatorError> {
    if n < 1 {
        return Err(IndicatorError::Parameter("sma window must be >= 1".into()));
    }
    let mut out = vec![None; x.len()];
    let mut sum = 0.0;
    for t in 0..x.len() {
        sum += x[t];
        if t >= n {
            sum -= x[t - n];
        }
        if t + 1 >= n {
            out[t] = Some(sum / n as f64);
        }
    }
    Ok(out)
}

/// Exponential moving average with `alpha = 2 / (span + 1)`, seeded with `x[0]`.
pub fn ema(x: &[f64], span: usize) -> Result<Vec<f64>, IndicatorError> {
    if span < 1 {
        return Err(IndicatorError::Parameter("ema span must be >= 1".into()));
    }
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = match x.first() {
        Some(&v) => v,
        None => return Ok(out),
    };
    out.push(prev);
    for &v in &x[1..] {
        prev = alpha * v + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// `ema(close, fast) - ema(close, slow)`.
pub fn macd_with(close: &[f64], fast: usize, slow: usize) -> Result<Vec<f64>, IndicatorError> {
    if close.is_empty() {
        return Err(IndicatorError::Empty);
    }
    let f = ema(close, fast)?;
    let s = ema(close, slow)?;
    Ok(f.iter().zip(&s).map(|(a, b)| a - b).collect())
}

/// MACD line with the conventional 12/26 spans.
pub fn macd(close: &[f64]) -> Result<Vec<f64>, IndicatorError> {
    macd_with(close, 12, 26)
}

/// `ln(close[t]) - ln(close[t - lag])`.
pub fn log_momentum_with(close: &[f64], lag: usize) -> Result<Vec<Option<f64>>, IndicatorError> {
    if lag < 1 {
        return Err(IndicatorError::Parameter("momentum lag must be >= 1".into()));
    }
    if let Some((index, &value)) = close.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
        return Err(IndicatorError::Domain { index, value });
    }
    let logs: Vec<f64> = close.iter().map(|c| c.ln()).collect();
    Ok((0..close.len())
        .map(|t| (t >= lag).then(|| logs[t] - logs[t - lag]))
        .collect())
}

pub fn log_momentum(close: &[f64]) -> Result<Vec<Option<f64>>, IndicatorError> {
    log_momentum_with(close, 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BollingerBands {
    pub upper: Vec<Option<f64>>,
    pub middle: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
}

/// Bollinger bands: windowed mean plus/minus `k` population standard deviations.
pub fn bollinger(close: &[f64], n: usize, k: f64) -> Result<BollingerBands, IndicatorError> {
    if n < 2 {
        return Err(IndicatorError::Parameter("bollinger window must be >= 2".into()));
    }
    let middle = sma(close, n)?;
    let mut upper = vec![None; close.len()];
    let mut lower = vec![None; close.len()];
    for t in (n - 1)..close.len() {
        let mean = middle[t].expect("defined past warm-up");
        let window = &close[t + 1 - n..=t];
        let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        upper[t] = Some(mean + k * sd);
        lower[t] = Some(mean - k * sd);
    }
    Ok(BollingerBands { upper, middle, lower })
}

/// Raw or normalized feature rows aligned to trading dates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub column_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub close_column_index: usize,
    /// Dates removed as indicator warm-up.
    pub dropped_dates: Vec<NaiveDate>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn close(&self) -> Vec<f64> {
        self.values.column(self.close_column_index).to_vec()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Same dates and labels with replaced values.
    pub fn with_values(&self, values: Array2<f64>) -> FeatureMatrix {
        assert_eq!(values.dim(), self.values.dim());
        FeatureMatrix {
            values,
            column_names: self.column_names.clone(),
            dates: self.dates.clone(),
            close_column_index: self.close_column_index,
            dropped_dates: self.dropped_dates.clone(),
        }
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.slice(ndarray::s![start..end, ..]).to_owned(),
            column_names: self.column_names.clone(),
            dates: self.dates[start..end].to_vec(),
            close_column_index: self.close_column_index,
            dropped_dates: Vec::new(),
        }
    }

    /// Leading `floor(fraction * rows)` rows for training, the rest for testing.
    pub fn split(&self, train_fraction: f64) -> Result<(FeatureMatrix, FeatureMatrix), crate::market_data::MarketDataError> {
        let cut = crate::market_data::train_len(self.rows(), train_fraction)?;
        Ok((self.slice_rows(0, cut), self.slice_rows(cut, self.rows())))
    }
}

/// Computes every indicator and assembles the 14 feature columns, dropping
/// warm-up rows.
pub fn build_feature_matrix(series: &PriceSeries, params: &IndicatorParams) -> Result<FeatureMatrix, IndicatorError> {
    params.validate()?;
    let required = params.min_bars();
    if series.len() < required {
        return Err(IndicatorError::InsufficientData {
            required,
            got: series.len(),
        });
    }
    let bars = series.bars();
    let close = series.closes();

    let ma_s = sma(&close, params.ma_short)?;
    let ma_l = sma(&close, params.ma_long)?;
    let macd_line = macd_with(&close, params.macd_fast, params.macd_slow)?;
    let ema_line = ema(&close, params.ema_span)?;
    let mom = log_momentum_with(&close, params.momentum_lag)?;
    let bb = bollinger(&close, params.bollinger_window, params.bollinger_k)?;

    let start = params.warm_up();
    let rows = bars.len() - start;
    let mut values = Array2::<f64>::zeros((rows, FEATURE_NAMES.len()));
    for (r, t) in (start..bars.len()).enumerate() {
        let b = &bars[t];
        let row = [
            b.open,
            b.high,
            b.low,
            b.close,
            b.adj_close,
            b.volume,
            ma_s[t].expect("past warm-up"),
            ma_l[t].expect("past warm-up"),
            macd_line[t],
            ema_line[t],
            mom[t].expect("past warm-up"),
            bb.upper[t].expect("past warm-up"),
            bb.middle[t].expect("past warm-up"),
            bb.lower[t].expect("past warm-up"),
        ];
        for (c, v) in row.into_iter().enumerate() {
            values[[r, c]] = v;
        }
    }

    Ok(FeatureMatrix {
        values,
        column_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        dates: bars[start..].iter().map(|b| b.date).collect(),
        close_column_index: CLOSE_COLUMN,
        dropped_dates: bars[..start].iter().map(|b| b.date).collect(),
    })
}
