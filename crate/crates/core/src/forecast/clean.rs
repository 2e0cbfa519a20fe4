//! Interquartile-range outlier removal and gap filling.
//!
//! With `Q1`, `Q3` the lower and upper percentiles (10th and 80th by
//! default), values outside `[Q1 − k·IQR, Q3 + k·IQR]` are removed. Removal
//! shifts the percentiles, so the rule is reapplied to the survivors until
//! nothing more is removed; this makes cleaning idempotent.

use serde::{Deserialize, Serialize};

use super::ForecastError;

pub const MIN_LENGTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IqrRule {
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    pub k: f64,
}

impl Default for IqrRule {
    fn default() -> Self {
        Self {
            lower_percentile: 10.0,
            upper_percentile: 80.0,
            k: 1.5,
        }
    }
}

impl IqrRule {
    pub fn check(&self) -> Result<(), ForecastError> {
        let ok = (0.0..=100.0).contains(&self.lower_percentile)
            && (0.0..=100.0).contains(&self.upper_percentile)
            && self.lower_percentile <= self.upper_percentile
            && self.k >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ForecastError::Config(format!("bad IQR rule {self:?}")))
        }
    }
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(lower, upper)` fences of one pass over the finite values.
pub fn iqr_bounds(values: &[f64], rule: &IqrRule) -> (f64, f64) {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = percentile(&sorted, rule.lower_percentile);
    let q3 = percentile(&sorted, rule.upper_percentile);
    let iqr = q3 - q1;
    (q1 - rule.k * iqr, q3 + rule.k * iqr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    /// Input with removed positions set to NaN. Missing (NaN) inputs stay NaN.
    pub values: Vec<f64>,
    /// True where a finite input was removed.
    pub removed: Vec<bool>,
    /// Fences of the final pass.
    pub lower: f64,
    pub upper: f64,
    pub passes: usize,
}

impl CleanReport {
    pub fn removed_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }
}

/// Removes outliers. NaN entries are treated as already missing.
pub fn iqr_clean(series: &[f64], rule: &IqrRule) -> Result<CleanReport, ForecastError> {
    rule.check()?;
    if series.len() < MIN_LENGTH {
        return Err(ForecastError::Data(format!(
            "IQR cleaning needs at least {MIN_LENGTH} values, got {}",
            series.len()
        )));
    }
    if !series.iter().any(|v| v.is_finite()) {
        return Err(ForecastError::Data("series has no finite values".into()));
    }
    let mut values = series.to_vec();
    let mut removed = vec![false; series.len()];
    let mut passes = 0;
    loop {
        passes += 1;
        let (lower, upper) = iqr_bounds(&values, rule);
        let mut changed = false;
        for (v, r) in values.iter_mut().zip(removed.iter_mut()) {
            if v.is_finite() && (*v < lower || *v > upper) {
                *v = f64::NAN;
                *r = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(CleanReport {
                values,
                removed,
                lower,
                upper,
                passes,
            });
        }
    }
}

/// Fills NaN runs by linear interpolation between their neighbours; runs at
/// either end take the nearest value.
pub fn fill_gaps(values: &[f64]) -> Result<Vec<f64>, ForecastError> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(ForecastError::Data("series has no finite values".into()));
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a], values[b]);
        for (i, o) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            *o = va + (vb - va) * (i - a) as f64 / (b - a) as f64;
        }
    }
    Ok(out)
}

/// Cleans then fills, returning the filled series and the removal count.
pub fn clean_and_fill(series: &[f64], rule: &IqrRule) -> Result<(Vec<f64>, usize), ForecastError> {
    let report = iqr_clean(series, rule)?;
    Ok((fill_gaps(&report.values)?, report.removed_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn same(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
    }

    #[test]
    fn uniform_zero_to_hundred_fences() {
        let xs: Vec<f64> = (0..=100).map(f64::from).collect();
        let (lo, hi) = iqr_bounds(&xs, &IqrRule::default());
        assert!((lo + 95.0).abs() < 1e-12);
        assert!((hi - 185.0).abs() < 1e-12);
        let r = iqr_clean(&xs, &IqrRule::default()).unwrap();
        assert_eq!(r.removed_count(), 0);
        assert_eq!(r.passes, 1);
    }

    #[test]
    fn injected_outlier_is_the_only_removal() {
        let mut xs: Vec<f64> = (0..=100).map(f64::from).collect();
        xs.insert(37, 1000.0);
        let r = iqr_clean(&xs, &IqrRule::default()).unwrap();
        let gone: Vec<usize> = (0..xs.len()).filter(|&i| r.removed[i]).collect();
        assert_eq!(gone, vec![37]);
    }

    #[test]
    fn constant_series_unchanged() {
        let xs = vec![7.0; 30];
        let r = iqr_clean(&xs, &IqrRule::default()).unwrap();
        assert_eq!(r.values, xs);
        assert_eq!(r.removed_count(), 0);
    }

    #[test]
    fn short_series_rejected() {
        assert!(iqr_clean(&[1.0; 9], &IqrRule::default()).is_err());
    }

    #[test]
    fn removal_can_cascade() {
        // the first pass drops 20 and 40, the second then drops the ones
        let mut xs: Vec<f64> = vec![0.0; 8];
        xs.extend([1.0, 1.0, 20.0, 40.0]);
        let r = iqr_clean(&xs, &IqrRule::default()).unwrap();
        assert_eq!(r.removed_count(), 4);
        assert_eq!(r.passes, 3);
        let again = iqr_clean(&r.values, &IqrRule::default()).unwrap();
        assert!(same(&r.values, &again.values));
        assert_eq!(again.removed_count(), 0);
    }

    #[test]
    fn gaps_fill_linearly_and_ends_extend() {
        let f = fill_gaps(&[f64::NAN, 2.0, f64::NAN, f64::NAN, 8.0, f64::NAN]).unwrap();
        assert_eq!(f, vec![2.0, 2.0, 4.0, 6.0, 8.0, 8.0]);
        assert!(fill_gaps(&[f64::NAN; 3]).is_err());
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(xs in prop::collection::vec(prop_oneof![
            8 => -50.0f64..50.0,
            1 => -1e4f64..1e4,
        ], 10..120)) {
            let rule = IqrRule::default();
            let once = iqr_clean(&xs, &rule).unwrap();
            let twice = iqr_clean(&once.values, &rule).unwrap();
            prop_assert!(same(&once.values, &twice.values));
            prop_assert_eq!(twice.removed_count(), 0);
        }

        #[test]
        fn filled_series_stays_within_kept_range(xs in prop::collection::vec(-1e3f64..1e3, 10..80)) {
            let (filled, _) = clean_and_fill(&xs, &IqrRule::default()).unwrap();
            let r = iqr_clean(&xs, &IqrRule::default()).unwrap();
            let lo = r.values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            let hi = r.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(filled.iter().all(|v| *v >= lo && *v <= hi));
        }
    }
}
