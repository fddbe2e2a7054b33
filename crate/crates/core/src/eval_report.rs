//! Price-unit RMSE, chart data, distribution distance and comparison tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::train::{predict_with, TrainedModel};
use crate::market_data::{MarketDataError, Normalizer};
use crate::neural::NeuralError;
use crate::windowing::SegmentSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("reports disagree on {0}")]
    Mixed(String),
}

pub fn rmse(real: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    if real.len() != predicted.len() {
        return Err(EvalError::Length(real.len(), predicted.len()));
    }
    if real.is_empty() {
        return Err(EvalError::Empty);
    }
    let sse: f64 = real.iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / real.len() as f64).sqrt())
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Wasserstein-1 distance between two empirical distributions on the line.
pub fn wasserstein1_empirical(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    // ∫₀¹ |F⁻¹(u) − G⁻¹(u)| du over the merged quantile breakpoints.
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let (mut u, mut total) = (0.0, 0.0);
    while i < na && j < nb {
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    pub date: NaiveDate,
    pub real: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub stock: String,
    pub split: String,
    pub window: usize,
    pub horizon: usize,
    pub rmse: f64,
    /// Every predicted step in segment order; step `h` of a segment is dated by its target date.
    pub pairs: Vec<PricePair>,
    pub distribution_distance: f64,
    pub predicted_std: f64,
    pub real_std: f64,
}

impl EvalReport {
    /// Builds a report from normalized predictions; all statistics are in price units.
    pub fn from_predictions(
        model_name: &str,
        stock: &str,
        split: &str,
        normalizer: &Normalizer,
        segments: &SegmentSet,
        predictions: &[Vec<f64>],
    ) -> Result<Self, EvalError> {
        if predictions.len() != segments.len() {
            return Err(EvalError::Length(segments.len(), predictions.len()));
        }
        let mut pairs = Vec::new();
        for (seg, pred) in segments.segments.iter().zip(predictions) {
            if pred.len() != seg.target.len() {
                return Err(EvalError::Length(seg.target.len(), pred.len()));
            }
            let real = normalizer.denormalize_close(&seg.target)?;
            let pred = normalizer.denormalize_close(pred)?;
            for ((date, r), p) in seg.target_dates.iter().zip(real).zip(pred) {
                pairs.push(PricePair {
                    date: *date,
                    real: r,
                    predicted: p,
                });
            }
        }
        let real: Vec<f64> = pairs.iter().map(|p| p.real).collect();
        let pred: Vec<f64> = pairs.iter().map(|p| p.predicted).collect();
        Ok(Self {
            model_name: model_name.to_string(),
            stock: stock.to_string(),
            split: split.to_string(),
            window: segments.window,
            horizon: segments.horizon,
            rmse: rmse(&real, &pred)?,
            distribution_distance: wasserstein1_empirical(&pred, &real)?,
            predicted_std: std_dev(&pred),
            real_std: std_dev(&real),
            pairs,
        })
    }

    pub fn real(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.real).collect()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.predicted).collect()
    }

    /// `N→H` label used as a table column.
    pub fn mapping(&self) -> String {
        format!("{}->{}", self.window, self.horizon)
    }
}

pub fn evaluate(model: &TrainedModel, segments: &SegmentSet, stock: &str, split: &str) -> Result<EvalReport, EvalError> {
    let preds = predict_with(&model.spec, &model.params, segments)?;
    EvalReport::from_predictions(model.objective.as_str(), stock, split, &model.normalizer, segments, &preds)
}

/// Writes `date,real,predicted` with shortest round-trip float formatting.
pub fn write_chart_csv<W: Write>(report: &EvalReport, mut w: W) -> Result<(), EvalError> {
    if report.pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    writeln!(w, "date,real,predicted")?;
    for p in &report.pairs {
        writeln!(w, "{},{},{}", p.date, p.real, p.predicted)?;
    }
    Ok(())
}

/// Writes `<stem>.csv` and a best-effort `<stem>.svg` line chart; returns the CSV path.
pub fn emit_chart_data(report: &EvalReport, dir: &Path, stem: &str) -> Result<std::path::PathBuf, EvalError> {
    let csv = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_chart_csv(report, &mut buf)?;
    std::fs::write(&csv, buf)?;
    if let Err(e) = std::fs::write(dir.join(format!("{stem}.svg")), render_svg(report)) {
        log::warn!("chart image skipped: {e}");
    }
    Ok(csv)
}

/// Reads a chart CSV back into `(real, predicted)` columns.
pub fn read_chart_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| EvalError::Io(std::io::Error::other(e)))?;
    let (mut real, mut pred) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::Io(std::io::Error::other(e)))?;
        let field = |i: usize| -> Result<f64, EvalError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| EvalError::Io(std::io::Error::other(format!("bad chart row {rec:?}"))))
        };
        real.push(field(1)?);
        pred.push(field(2)?);
    }
    Ok((real, pred))
}

fn render_svg(report: &EvalReport) -> String {
    let (w, h, pad) = (900.0, 360.0, 30.0);
    let all = report.pairs.iter().flat_map(|p| [p.real, p.predicted]);
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = report.pairs.len().max(2) - 1;
    let path = |f: &dyn Fn(&PricePair) -> f64| {
        let mut s = String::new();
        for (i, p) in report.pairs.iter().enumerate() {
            let x = pad + (w - 2.0 * pad) * i as f64 / n as f64;
            let y = h - pad - (h - 2.0 * pad) * (f(p) - lo) / span;
            let _ = write!(s, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        s
    };
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
            "<text x=\"{pad}\" y=\"20\" font-size=\"14\">{title}</text>\n",
            "<path d=\"{real}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
            "<path d=\"{pred}\" fill=\"none\" stroke=\"red\" stroke-width=\"1\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        pad = pad,
        title = format!("{} {} {} (real black, predicted red)", report.stock, report.model_name, report.split),
        real = path(&|p| p.real),
        pred = path(&|p| p.predicted),
    )
}

/// RMSE grid: one row per model, one column per split × mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub stock: String,
    pub models: Vec<String>,
    /// `(split, mapping)` pairs, mapping formatted as `N->H`.
    pub columns: Vec<(String, String)>,
    pub cells: Vec<Vec<Option<f64>>>,
}

fn split_rank(s: &str) -> (u8, &str) {
    match s {
        "train" => (0, s),
        "test" => (1, s),
        _ => (2, s),
    }
}

pub fn comparison_table(reports: &[EvalReport]) -> Result<ComparisonTable, EvalError> {
    let stock = reports.first().ok_or(EvalError::Empty)?.stock.clone();
    if reports.iter().any(|r| r.stock != stock) {
        return Err(EvalError::Mixed("stock".into()));
    }
    let mut models: Vec<String> = Vec::new();
    for r in reports {
        if !models.contains(&r.model_name) {
            models.push(r.model_name.clone());
        }
    }
    let keys: BTreeSet<(usize, usize, (u8, String))> = reports
        .iter()
        .map(|r| {
            let (rank, s) = split_rank(&r.split);
            (r.window, r.horizon, (rank, s.to_string()))
        })
        .collect();
    // Splits outermost so train and test blocks stay contiguous.
    let mut columns: Vec<(usize, usize, (u8, String))> = keys.into_iter().collect();
    columns.sort_by(|a, b| (&a.2, a.0, a.1).cmp(&(&b.2, b.0, b.1)));
    let cells = models
        .iter()
        .map(|m| {
            columns
                .iter()
                .map(|(n, h, (_, s))| {
                    reports
                        .iter()
                        .find(|r| &r.model_name == m && r.window == *n && r.horizon == *h && &r.split == s)
                        .map(|r| r.rmse)
                })
                .collect()
        })
        .collect();
    Ok(ComparisonTable {
        stock,
        models,
        columns: columns.into_iter().map(|(n, h, (_, s))| (s, format!("{n}->{h}"))).collect(),
        cells,
    })
}

impl ComparisonTable {
    pub fn render_text(&self) -> String {
        let head: Vec<String> = self.columns.iter().map(|(s, m)| format!("{s} {m}")).collect();
        let body: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|row| row.iter().map(|c| c.map_or("-".to_string(), |v| format!("{v:.4}"))).collect())
            .collect();
        let first = self.models.iter().map(String::len).chain([self.stock.len(), 5]).max().unwrap_or(5);
        let widths: Vec<usize> = (0..head.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([head[j].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", self.stock);
        for (h, w) in head.iter().zip(&widths) {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
        for (m, row) in self.models.iter().zip(&body) {
            let _ = write!(out, "{m:<first$}");
            for (c, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out
    }

    /// `model,split,horizon,rmse`; horizon is the `N->H` mapping, missing cells are skipped.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,split,horizon,rmse\n");
        for (m, row) in self.models.iter().zip(&self.cells) {
            for ((split, mapping), cell) in self.columns.iter().zip(row) {
                if let Some(v) = cell {
                    let _ = writeln!(out, "{m},{split},{mapping},{v}");
                }
            }
        }
        out
    }
}
