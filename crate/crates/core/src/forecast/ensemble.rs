//! Exponentially weighted blend of overlapping hourly forecasts.
//!
//! A forecast issued at hour `k` covers hours `k..k+24`, so its prediction
//! for hour `h` has age `h − k + 1` in `1..=24`. Prediction weights are
//! `exp(−λ·age)`, renormalised over the predictions actually available.

use super::{ForecastError, HORIZON};

/// Normalised weights for the given ages. Shifting by the youngest age
/// leaves the ratios unchanged and keeps large `λ` finite.
pub fn ensemble_weights(ages: &[u32], lambda: f64) -> Vec<f64> {
    let Some(&youngest) = ages.iter().min() else {
        return Vec::new();
    };
    let raw: Vec<f64> = ages
        .iter()
        .map(|&a| (-lambda * f64::from(a - youngest)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Weighted mean of `(age, value)` pairs.
pub fn combine(predictions: &[(u32, f64)], lambda: f64) -> Option<f64> {
    if predictions.is_empty() {
        return None;
    }
    let ages: Vec<u32> = predictions.iter().map(|p| p.0).collect();
    let w = ensemble_weights(&ages, lambda);
    Some(w.iter().zip(predictions).map(|(w, p)| w * p.1).sum())
}

/// Every prediction available for one target hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub hour: usize,
    /// `(age, value)`.
    pub predictions: Vec<(u32, f64)>,
}

impl ForecastSet {
    pub fn combine(&self, lambda: f64) -> Result<f64, ForecastError> {
        combine(&self.predictions, lambda).ok_or(ForecastError::Empty(self.hour))
    }
}

/// One 24-hour forecast per issuance hour, starting at `first_issue`.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedForecasts {
    pub first_issue: usize,
    pub values: Vec<Vec<f64>>,
}

impl IssuedForecasts {
    /// Predictions for `hour` from forecasts issued no later than `now`.
    pub fn forecast_set(&self, now: usize, hour: usize) -> ForecastSet {
        let end = self.first_issue + self.values.len();
        let lo = (hour + 1).saturating_sub(HORIZON).max(self.first_issue);
        let hi = now.min(hour).min(end.saturating_sub(1));
        let predictions = if lo > hi || end == self.first_issue {
            Vec::new()
        } else {
            (lo..=hi)
                .map(|k| ((hour - k + 1) as u32, self.values[k - self.first_issue][hour - k]))
                .collect()
        };
        ForecastSet { hour, predictions }
    }

    /// Combined forecasts for `hours`, as known at hour `now`.
    pub fn combined(&self, now: usize, hours: std::ops::Range<usize>, lambda: f64) -> Result<Vec<f64>, ForecastError> {
        hours.map(|h| self.forecast_set(now, h).combine(lambda)).collect()
    }
}
