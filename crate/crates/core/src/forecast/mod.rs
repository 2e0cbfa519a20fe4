//! 24-hour-ahead forecasting of electricity price and solar radiation.
//!
//! Raw series are cleaned with an interquartile-range rule and gap-filled
//! ([`clean`]), turned into feature tables and sliding windows
//! ([`features`]), and fed to a small encoder-only transformer ([`model`])
//! trained with Adam ([`train`]). Every hour a new 24-hour forecast is
//! issued, so each target hour collects up to 24 overlapping predictions,
//! which [`ensemble`] blends with exponentially decaying weights.

pub mod checkpoint;
pub mod clean;
pub mod ensemble;
pub mod features;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{fill_gaps, iqr_bounds, iqr_clean, percentile, CleanReport, IqrRule};
pub use ensemble::{combine, ensemble_weights, ForecastSet, IssuedForecasts};
pub use features::{FeatureTable, Split, WindowSet};
pub use model::{ModelConfig, Transformer};
pub use train::{EpochMetrics, Forecaster, TrainConfig, TrainReport};

pub const WINDOW: usize = 24;
pub const HORIZON: usize = 24;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("empty forecast set for hour {0}")]
    Empty(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which series a model forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Price,
    Solar,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Price => "price",
            Target::Solar => "solar",
        }
    }
}

/// How MPC obtains its price and solar forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// Forecast equals the realised value.
    #[default]
    Oracle,
    /// Repeat the value observed 24 hours earlier.
    Persistence,
    /// Trained transformer, ensembled over issuance times.
    Transformer,
}

impl std::str::FromStr for ForecastMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "persistence" => Ok(Self::Persistence),
            "transformer" => Ok(Self::Transformer),
            other => Err(format!("unknown forecast mode {other:?}")),
        }
    }
}

/// Per-column mean and standard deviation, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits on `rows` of the column-major table. A zero spread maps to 1.
    pub fn fit(columns: &[Vec<f64>], rows: std::ops::Range<usize>) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = Vec::with_capacity(columns.len());
        let mut std = Vec::with_capacity(columns.len());
        for col in columns {
            let slice = &col[rows.clone()];
            let m = slice.iter().sum::<f64>() / n;
            let v = slice.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let s = v.sqrt();
            mean.push(m);
            std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn normalize(&self, column: usize, x: f64) -> f64 {
        (x - self.mean[column]) / self.std[column]
    }

    pub fn denormalize(&self, column: usize, z: f64) -> f64 {
        z * self.std[column] + self.mean[column]
    }
}

/// The previous day's values, repeated.
pub fn persistence_forecast(history: &[f64]) -> Result<Vec<f64>, ForecastError> {
    if history.len() < HORIZON {
        return Err(ForecastError::Shape {
            what: "persistence history",
            expected: HORIZON,
            got: history.len(),
        });
    }
    Ok(history[history.len() - HORIZON..].to_vec())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    (pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / n).sqrt()
}

pub fn mae(pred: &[f64], actual: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn persistence_on_periodic_and_shifted_days() {
        let day: Vec<f64> = (0..24).map(|h| (h as f64).sin() * 5.0).collect();
        let two: Vec<f64> = day.iter().chain(&day).copied().collect();
        let f = persistence_forecast(&two[..24]).unwrap();
        assert_eq!(rmse(&f, &two[24..]), 0.0);
        let shifted: Vec<f64> = day.iter().map(|v| v + 2.5).collect();
        let f = persistence_forecast(&day).unwrap();
        for (p, a) in f.iter().zip(&shifted) {
            assert!(((a - p) - 2.5).abs() < 1e-12);
        }
        assert!(persistence_forecast(&day[..5]).is_err());
        let flat = vec![3.0; 48];
        assert_eq!(persistence_forecast(&flat[..24]).unwrap(), flat[24..].to_vec());
    }

    #[test]
    fn zero_spread_column_keeps_unit_scale() {
        let n = Normalizer::fit(&[vec![4.0; 10]], 0..10);
        assert_eq!(n.std[0], 1.0);
        assert_eq!(n.normalize(0, 4.0), 0.0);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("persistence".parse::<ForecastMode>(), Ok(ForecastMode::Persistence));
        assert!("nope".parse::<ForecastMode>().is_err());
    }

    proptest! {
        #[test]
        fn normalisation_round_trips(col in prop::collection::vec(-1e4f64..1e4, 2..50), x in -1e4f64..1e4) {
            let n = col.len();
            let norm = Normalizer::fit(&[col], 0..n);
            let back = norm.denormalize(0, norm.normalize(0, x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
