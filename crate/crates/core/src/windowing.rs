//! Sliding windows over a normalized feature matrix.

use chrono::NaiveDate;
use ndarray::{s, Array2};
use thiserror::Error;

use crate::indicators::FeatureMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("insufficient data: {rows} rows, window {window} + horizon {horizon} needs at least {}", window + horizon)]
    InsufficientData { rows: usize, window: usize, horizon: usize },
    #[error("shape mismatch: expected {expected} predicted values, got {got}")]
    Shape { expected: usize, got: usize },
}

/// One generator input window with its conditioning closes and target.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// `N x M` window of normalized features.
    pub inputs: Array2<f64>,
    /// Close column of `inputs`.
    pub hist_closes: Vec<f64>,
    /// Next `H` normalized closes after the window.
    pub target: Vec<f64>,
    /// Date of the last window row.
    pub anchor_date: NaiveDate,
    /// Dates of the target closes.
    pub target_dates: Vec<NaiveDate>,
}

impl Segment {
    /// Real conditioned input: `hist_closes ‖ target`.
    pub fn real_input(&self) -> Vec<f64> {
        build_real_input(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    pub window: usize,
    pub horizon: usize,
    pub features: usize,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Length of a conditioned discriminator input.
    pub fn conditioned_len(&self) -> usize {
        self.window + self.horizon
    }

    /// Subset of segments by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Vec<&Segment> {
        idx.iter().map(|&i| &self.segments[i]).collect()
    }
}

/// Stride-1 windows: segment `i` covers rows `[i, i+N)` and targets the
/// closes at rows `[i+N, i+N+H)`.
pub fn make_segments(features: &FeatureMatrix, window: usize, horizon: usize) -> Result<SegmentSet, WindowError> {
    if window < 1 || horizon < 1 {
        return Err(WindowError::Parameter(format!(
            "window and horizon must be >= 1 (got {window}, {horizon})"
        )));
    }
    let rows = features.rows();
    if rows < window + horizon {
        return Err(WindowError::InsufficientData { rows, window, horizon });
    }
    let ci = features.close_column_index;
    let close = features.values.column(ci);
    let count = rows - window - horizon + 1;
    let segments = (0..count)
        .map(|i| {
            let inputs = features.values.slice(s![i..i + window, ..]).to_owned();
            Segment {
                hist_closes: inputs.column(ci).to_vec(),
                inputs,
                target: close.slice(s![i + window..i + window + horizon]).to_vec(),
                anchor_date: features.dates[i + window - 1],
                target_dates: features.dates[i + window..i + window + horizon].to_vec(),
            }
        })
        .collect();
    Ok(SegmentSet {
        segments,
        window,
        horizon,
        features: features.width(),
    })
}

/// `hist_closes ‖ target`.
pub fn build_real_input(seg: &Segment) -> Vec<f64> {
    seg.hist_closes.iter().chain(&seg.target).copied().collect()
}

/// `hist_closes ‖ predicted`.
pub fn build_fake_input(seg: &Segment, predicted: &[f64]) -> Result<Vec<f64>, WindowError> {
    if predicted.len() != seg.target.len() {
        return Err(WindowError::Shape {
            expected: seg.target.len(),
            got: predicted.len(),
        });
    }
    Ok(seg.hist_closes.iter().chain(predicted).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize) -> FeatureMatrix {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        FeatureMatrix {
            values: Array2::from_shape_fn((rows, cols), |(r, c)| r as f64 * 100.0 + c as f64),
            column_names: (0..cols).map(|c| format!("f{c}")).collect(),
            dates: (0..rows).map(|r| start + chrono::Days::new(r as u64)).collect(),
            close_column_index: 3.min(cols - 1),
            dropped_dates: Vec::new(),
        }
    }

    #[test]
    fn counts_and_boundaries() {
        let fm = matrix(10, 14);
        assert_eq!(make_segments(&fm, 3, 1).unwrap().len(), 7);
        assert_eq!(
            make_segments(&fm, 10, 1).unwrap_err(),
            WindowError::InsufficientData {
                rows: 10,
                window: 10,
                horizon: 1
            }
        );
        assert_eq!(make_segments(&matrix(11, 14), 10, 1).unwrap().len(), 1);
        assert!(make_segments(&fm, 0, 1).is_err());
    }

    #[test]
    fn segment_contents() {
        let fm = matrix(10, 14);
        let set = make_segments(&fm, 3, 2).unwrap();
        let seg = &set.segments[1];
        assert_eq!(seg.inputs.dim(), (3, 14));
        assert_eq!(seg.hist_closes, vec![103.0, 203.0, 303.0]);
        assert_eq!(seg.target, vec![403.0, 503.0]);
        assert_eq!(seg.anchor_date, fm.dates[3]);
        assert_eq!(seg.target_dates, vec![fm.dates[4], fm.dates[5]]);
        assert!(seg.target_dates[0] > seg.anchor_date);
    }

    #[test]
    fn conditioned_inputs() {
        let fm = matrix(30, 14);
        let set = make_segments(&fm, 3, 1).unwrap();
        let seg = &set.segments[0];
        assert_eq!(build_real_input(seg), vec![3.0, 103.0, 203.0, 303.0]);
        assert_eq!(build_fake_input(seg, &[7.0]).unwrap(), vec![3.0, 103.0, 203.0, 7.0]);
        assert_eq!(build_fake_input(seg, &seg.target).unwrap(), build_real_input(seg));

        let set = make_segments(&fm, 10, 5).unwrap();
        assert_eq!(build_real_input(&set.segments[0]).len(), 15);

        let set = make_segments(&fm, 3, 2).unwrap();
        assert_eq!(
            build_fake_input(&set.segments[0], &[1.0]).unwrap_err(),
            WindowError::Shape { expected: 2, got: 1 }
        );
    }
}
