//! Deterministic synthetic OHLCV series for tests and demos.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::market_data::{MarketDataError, OhlcvBar, PriceSeries};

/// Closes follow `level + amplitude·sin(2πt/period)` plus Gaussian noise whose
/// std is `rms(sine) / snr`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineFixture {
    pub bars: usize,
    pub level: f64,
    pub amplitude: f64,
    pub period: f64,
    pub snr: f64,
    pub seed: u64,
}

impl Default for SineFixture {
    fn default() -> Self {
        Self {
            bars: 2000,
            level: 100.0,
            amplitude: 10.0,
            period: 50.0,
            snr: 10.0,
            seed: 7,
        }
    }
}

impl SineFixture {
    pub fn noise_std(&self) -> f64 {
        self.amplitude / std::f64::consts::SQRT_2 / self.snr
    }

    pub fn closes(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.noise_std()).expect("finite std");
        (0..self.bars)
            .map(|t| {
                let phase = 2.0 * std::f64::consts::PI * t as f64 / self.period;
                self.level + self.amplitude * phase.sin() + noise.sample(rng)
            })
            .collect()
    }

    pub fn series(&self) -> Result<PriceSeries, MarketDataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let closes = self.closes(&mut rng);
        bars_from_closes(&closes, self.noise_std(), &mut rng)
    }
}

/// Geometric random walk with drift, shaped like a large-cap daily history.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkFixture {
    pub bars: usize,
    pub start: f64,
    pub drift: f64,
    pub volatility: f64,
    pub seed: u64,
}

impl Default for RandomWalkFixture {
    fn default() -> Self {
        Self {
            bars: 2600,
            start: 30.0,
            drift: 0.0009,
            volatility: 0.016,
            seed: 11,
        }
    }
}

impl RandomWalkFixture {
    pub fn series(&self) -> Result<PriceSeries, MarketDataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut price = self.start;
        let mut closes = Vec::with_capacity(self.bars);
        for _ in 0..self.bars {
            closes.push(price);
            let z: f64 = StandardNormal.sample(&mut rng);
            price *= (self.drift - 0.5 * self.volatility * self.volatility + self.volatility * z).exp();
        }
        let spread = self.start * self.volatility * 0.5;
        bars_from_closes(&closes, spread, &mut rng)
    }
}

/// Business days (Mon–Fri) starting at 2010-01-04.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Opens at the previous close; high/low extend past the body by `|N(0, spread)|`.
pub fn bars_from_closes(closes: &[f64], spread: f64, rng: &mut ChaCha8Rng) -> Result<PriceSeries, MarketDataError> {
    let dates = business_days(closes.len());
    let mut prev = closes.first().copied().unwrap_or_default();
    let bars = closes
        .iter()
        .zip(dates)
        .map(|(&close, date)| {
            let open = prev;
            prev = close;
            let up: f64 = StandardNormal.sample(rng);
            let down: f64 = StandardNormal.sample(rng);
            OhlcvBar {
                date,
                open,
                high: open.max(close) + (up * spread).abs(),
                low: (open.min(close) - (down * spread).abs()).max(close.min(open) * 0.5),
                close,
                adj_close: close,
                volume: rng.random_range(1.0e6..5.0e6_f64).round(),
            }
        })
        .collect();
    PriceSeries::from_bars(bars)
}

/// Writes the series in the ingest CSV format.
pub fn write_csv<W: Write>(series: &PriceSeries, mut w: W) -> std::io::Result<()> {
    writeln!(w, "Date,Open,High,Low,Close,Adj Close,Volume")?;
    for b in series.bars() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.date, b.open, b.high, b.low, b.close, b.adj_close, b.volume
        )?;
    }
    Ok(())
}
