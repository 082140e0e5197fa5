//! Moving Z-score anomaly detection: each observation is scored by its
//! deviation from the mean of the preceding window, in units of that
//! window's sample standard deviation, then the largest absolute scores are
//! flagged via a percentile threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::trace::MetricSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScorePoint {
    pub timestamp: i64,
    /// Standard deviations from the trailing-window mean. Infinite when the
    /// window was perfectly flat and the observation departed from it.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub threshold_percentile: f64,
    pub threshold_value: f64,
    pub flagged: Vec<i64>,
    pub total_points: usize,
}

/// Scores every present observation after the first `window` of them:
/// `z_i = (v_i - mean(previous window)) / sample_std(previous window)`.
/// The window precedes the observation and never includes it. A flat window
/// yields `z = 0` if the observation equals the window value, otherwise a
/// signed infinite marker (any departure from a constant window is
/// maximally surprising).
pub fn moving_zscore(series: &MetricSeries, window: usize) -> Result<Vec<ZScorePoint>> {
    if window < 2 {
        return Err(Error::RejectedInput(format!(
            "z-score window must be >= 2 samples, got {window}"
        )));
    }
    let points: Vec<(i64, f64)> = series.present_samples().collect();
    if points.len() <= window {
        return Err(Error::RejectedInput(format!(
            "{}: {} present samples, need more than the window ({window})",
            series.key(),
            points.len()
        )));
    }
    let mut out = Vec::with_capacity(points.len() - window);
    for i in window..points.len() {
        let trailing: Vec<f64> = points[i - window..i].iter().map(|p| p.1).collect();
        let mean = stats::mean(&trailing);
        let std = stats::sample_std(&trailing);
        let (t, v) = points[i];
        let z = if std > 0.0 {
            (v - mean) / std
        } else if v == mean {
            0.0
        } else {
            (v - mean).signum() * f64::INFINITY
        };
        out.push(ZScorePoint { timestamp: t, z });
    }
    Ok(out)
}

/// Flags the observations whose |z| exceeds the empirical `percentile` of
/// all |z| values (two-sided: both increases and decreases count). Infinite
/// markers are always flagged. `percentile` of 100 flags nothing finite,
/// since the comparison is strict.
pub fn detect_anomalies(
    series: &MetricSeries,
    window: usize,
    percentile: f64,
) -> Result<AnomalyReport> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::RejectedInput(format!(
            "threshold percentile {percentile} outside (0, 100]"
        )));
    }
    let scores = moving_zscore(series, window)?;
    let abs: Vec<f64> = scores.iter().map(|p| p.z.abs()).collect();
    let threshold_value = stats::percentile(&abs, percentile);
    let flagged = scores
        .iter()
        .filter(|p| p.z.is_infinite() || p.z.abs() > threshold_value)
        .map(|p| p.timestamp)
        .collect();
    Ok(AnomalyReport {
        threshold_percentile: percentile,
        threshold_value,
        flagged,
        total_points: scores.len(),
    })
}
