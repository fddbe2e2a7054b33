//! OHLCV ingestion, chronological splitting and `[-1, 1]` feature scaling.

use std::io::Read;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header expected on the first line of a Yahoo Finance daily export.
pub const OHLCV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {detail}")]
    Row { line: usize, detail: String },
    #[error("duplicate date {date} (lines {first_line} and {second_line})")]
    DuplicateDate {
        date: NaiveDate,
        first_line: usize,
        second_line: usize,
    },
    #[error("price series is empty")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("close column is degenerate (min = max = {0}); cannot invert normalization")]
    DegenerateClose(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl OhlcvBar {
    /// `low <= min(open, close)` and `high >= max(open, close)`.
    pub fn is_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

/// A bar whose high/low range does not bracket its open and close.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeViolation {
    pub line: usize,
    pub date: NaiveDate,
}

/// Date-ordered daily bars. Dates are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceSeries {
    bars: Vec<OhlcvBar>,
    violations: Vec<RangeViolation>,
}

impl PriceSeries {
    /// Builds a series from bars, sorting by date. Duplicate dates are rejected.
    pub fn from_bars(mut bars: Vec<OhlcvBar>) -> Result<Self, MarketDataError> {
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(MarketDataError::DuplicateDate {
                date: w[0].date,
                first_line: 0,
                second_line: 0,
            });
        }
        Ok(Self {
            bars,
            violations: Vec::new(),
        })
    }

    pub fn bars(&self) -> &[OhlcvBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Rows whose high/low did not bracket open/close. Such rows are kept.
    pub fn violations(&self) -> &[RangeViolation] {
        &self.violations
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    /// Sub-series starting at bar `start`.
    pub fn tail_from(&self, start: usize) -> PriceSeries {
        PriceSeries {
            bars: self.bars[start.min(self.bars.len())..].to_vec(),
            violations: Vec::new(),
        }
    }
}

fn parse_field(field: Option<&str>, name: &str, line: usize) -> Result<f64, MarketDataError> {
    let raw = field.ok_or_else(|| MarketDataError::Row {
        line,
        detail: format!("missing column `{name}`"),
    })?;
    let value: f64 = raw.trim().parse().map_err(|_| MarketDataError::Row {
        line,
        detail: format!("column `{name}`: cannot parse `{raw}` as a number"),
    })?;
    if !value.is_finite() {
        return Err(MarketDataError::Row {
            line,
            detail: format!("column `{name}`: non-finite value `{raw}`"),
        });
    }
    Ok(value)
}

/// Parses a daily OHLCV CSV in the Yahoo Finance layout.
///
/// Rows may appear in any order; they are sorted by date. Line numbers in
/// errors are 1-based and count the header as line 1.
pub fn parse_ohlcv_csv<R: Read>(source: R) -> Result<PriceSeries, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(MarketDataError::Header {
                expected: OHLCV_HEADER.join(","),
                found: String::new(),
            })
        }
    };
    let found: Vec<&str> = header.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if found != OHLCV_HEADER {
        return Err(MarketDataError::Header {
            expected: OHLCV_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut rows: Vec<(usize, OhlcvBar)> = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| MarketDataError::Row {
            line,
            detail: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let date_raw = rec.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|_| MarketDataError::Row {
            line,
            detail: format!("column `Date`: cannot parse `{date_raw}` as YYYY-MM-DD"),
        })?;
        let bar = OhlcvBar {
            date,
            open: parse_field(rec.get(1), "Open", line)?,
            high: parse_field(rec.get(2), "High", line)?,
            low: parse_field(rec.get(3), "Low", line)?,
            close: parse_field(rec.get(4), "Close", line)?,
            adj_close: parse_field(rec.get(5), "Adj Close", line)?,
            volume: parse_field(rec.get(6), "Volume", line)?,
        };
        if bar.volume < 0.0 {
            return Err(MarketDataError::Row {
                line,
                detail: format!("column `Volume`: negative value {}", bar.volume),
            });
        }
        if rec.len() > OHLCV_HEADER.len() {
            return Err(MarketDataError::Row {
                line,
                detail: format!("expected {} columns, found {}", OHLCV_HEADER.len(), rec.len()),
            });
        }
        rows.push((line, bar));
    }

    if rows.is_empty() {
        return Err(MarketDataError::Empty);
    }

    rows.sort_by_key(|(_, b)| b.date);
    if let Some(w) = rows.windows(2).find(|w| w[0].1.date == w[1].1.date) {
        let (a, b) = (w[0].0.min(w[1].0), w[0].0.max(w[1].0));
        return Err(MarketDataError::DuplicateDate {
            date: w[0].1.date,
            first_line: a,
            second_line: b,
        });
    }

    let violations = rows
        .iter()
        .filter(|(_, b)| !b.is_consistent())
        .map(|(line, b)| RangeViolation {
            line: *line,
            date: b.date,
        })
        .collect::<Vec<_>>();
    if !violations.is_empty() {
        log::warn!("{} rows have high/low outside open/close", violations.len());
    }

    Ok(PriceSeries {
        bars: rows.into_iter().map(|(_, b)| b).collect(),
        violations,
    })
}

/// Number of leading items that go to the training side of a split.
pub fn train_len(len: usize, train_fraction: f64) -> Result<usize, MarketDataError> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(MarketDataError::Parameter(format!(
            "train_fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    Ok((train_fraction * len as f64).floor() as usize)
}

/// Splits a series into a leading training part and a trailing test part.
pub fn chronological_split(
    series: &PriceSeries,
    train_fraction: f64,
) -> Result<(PriceSeries, PriceSeries), MarketDataError> {
    if series.is_empty() {
        return Err(MarketDataError::Empty);
    }
    let cut = train_len(series.len(), train_fraction)?;
    let (a, b) = series.bars.split_at(cut);
    Ok((
        PriceSeries {
            bars: a.to_vec(),
            violations: Vec::new(),
        },
        PriceSeries {
            bars: b.to_vec(),
            violations: Vec::new(),
        },
    ))
}

/// Column-wise min/max scaling to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub per_feature_min: Vec<f64>,
    pub per_feature_max: Vec<f64>,
    /// Which rows the extrema were taken from (e.g. `train`, `full`).
    pub fitted_on: String,
    /// Index of the close-price column.
    pub close_index: usize,
}

impl Normalizer {
    pub fn fit(features: ArrayView2<'_, f64>, close_index: usize, fitted_on: &str) -> Result<Self, MarketDataError> {
        if features.nrows() == 0 {
            return Err(MarketDataError::Empty);
        }
        if close_index >= features.ncols() {
            return Err(MarketDataError::Shape(format!(
                "close index {close_index} out of range for {} columns",
                features.ncols()
            )));
        }
        let mut mins = Vec::with_capacity(features.ncols());
        let mut maxs = Vec::with_capacity(features.ncols());
        for col in features.axis_iter(Axis(1)) {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mins.push(lo);
            maxs.push(hi);
        }
        let norm = Self {
            per_feature_min: mins,
            per_feature_max: maxs,
            fitted_on: fitted_on.to_string(),
            close_index,
        };
        for i in norm.degenerate_columns() {
            log::warn!("feature column {i} is constant; it will normalize to 0");
        }
        Ok(norm)
    }

    pub fn width(&self) -> usize {
        self.per_feature_min.len()
    }

    pub fn is_degenerate(&self, col: usize) -> bool {
        self.per_feature_max[col] <= self.per_feature_min[col]
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&i| self.is_degenerate(i)).collect()
    }

    /// `x' = 2 (x - min) / (max - min) - 1`; constant columns map to 0.
    pub fn normalize(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, MarketDataError> {
        if features.ncols() != self.width() {
            return Err(MarketDataError::Shape(format!(
                "normalizer fitted on {} columns, got {}",
                self.width(),
                features.ncols()
            )));
        }
        let mut out = features.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.per_feature_min[j], self.per_feature_max[j]);
            if self.is_degenerate(j) {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|x| 2.0 * (x - lo) / (hi - lo) - 1.0);
            }
        }
        Ok(out)
    }

    pub fn normalize_close(&self, price: f64) -> Result<f64, MarketDataError> {
        let (lo, hi) = self.close_range()?;
        Ok(2.0 * (price - lo) / (hi - lo) - 1.0)
    }

    /// Inverse map of the close column back to price units.
    pub fn denormalize_close(&self, values: &[f64]) -> Result<Vec<f64>, MarketDataError> {
        let (lo, hi) = self.close_range()?;
        Ok(values.iter().map(|v| (v + 1.0) * 0.5 * (hi - lo) + lo).collect())
    }

    fn close_range(&self) -> Result<(f64, f64), MarketDataError> {
        if self.close_index >= self.width() {
            return Err(MarketDataError::Shape(format!(
                "close index {} out of range for {} columns",
                self.close_index,
                self.width()
            )));
        }
        let (lo, hi) = (self.per_feature_min[self.close_index], self.per_feature_max[self.close_index]);
        if self.is_degenerate(self.close_index) {
            return Err(MarketDataError::DegenerateClose(lo));
        }
        Ok((lo, hi))
    }
}
