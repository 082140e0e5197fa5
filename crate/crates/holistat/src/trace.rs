//! Core trace data model: metric series on a fixed sampling grid, scheduler
//! jobs, node inventory, and the resampling/normalization primitives the
//! analysis stages build on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// One measurement slot. A `None` value is an explicit missing marker
/// (a NaN in the raw telemetry); present values are always finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: i64,
    pub value: Option<f64>,
}

impl Sample {
    pub fn present(timestamp: i64, value: f64) -> Self {
        Sample { timestamp, value: Some(value) }
    }

    pub fn missing(timestamp: i64) -> Self {
        Sample { timestamp, value: None }
    }
}

/// Identifies one (node, metric) series. Ordered lexicographically so pair
/// enumeration and report output are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub node_id: String,
    pub metric_name: String,
}

impl SeriesKey {
    pub fn new(node_id: impl Into<String>, metric_name: impl Into<String>) -> Self {
        SeriesKey { node_id: node_id.into(), metric_name: metric_name.into() }
    }
}

impl std::fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.node_id, self.metric_name)
    }
}

/// One (node, metric) time series on a regular grid.
///
/// Invariants, checked on construction: timestamps strictly increase,
/// consecutive timestamps differ by a positive multiple of `base_interval`,
/// and present values are finite. Series may be empty mid-pipeline (e.g.
/// after a period split); cleanup rejects empty results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub node_id: String,
    pub metric_name: String,
    /// Grid spacing in seconds (15 for raw telemetry).
    pub base_interval: u32,
    pub samples: Vec<Sample>,
}

impl MetricSeries {
    pub fn new(
        node_id: impl Into<String>,
        metric_name: impl Into<String>,
        base_interval: u32,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let series = MetricSeries {
            node_id: node_id.into(),
            metric_name: metric_name.into(),
            base_interval,
            samples,
        };
        series.validate()?;
        Ok(series)
    }

    fn validate(&self) -> Result<()> {
        if self.base_interval == 0 {
            return Err(Error::RejectedInput(format!(
                "{}: base_interval must be positive",
                self.key()
            )));
        }
        for pair in self.samples.windows(2) {
            let delta = pair[1].timestamp - pair[0].timestamp;
            if delta <= 0 {
                return Err(Error::RejectedInput(format!(
                    "{}: timestamps not strictly increasing at t={}",
                    self.key(),
                    pair[1].timestamp
                )));
            }
            if delta % i64::from(self.base_interval) != 0 {
                return Err(Error::RejectedInput(format!(
                    "{}: timestamp delta {} not a multiple of interval {}",
                    self.key(),
                    delta,
                    self.base_interval
                )));
            }
        }
        for s in &self.samples {
            if let Some(v) = s.value {
                if !v.is_finite() {
                    return Err(Error::RejectedInput(format!(
                        "{}: non-finite value at t={}",
                        self.key(),
                        s.timestamp
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn key(&self) -> SeriesKey {
        SeriesKey::new(self.node_id.clone(), self.metric_name.clone())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Present (non-missing) values in timestamp order.
    pub fn present_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().filter_map(|s| s.value)
    }

    /// Present (timestamp, value) pairs in timestamp order.
    pub fn present_samples(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.samples.iter().filter_map(|s| s.value.map(|v| (s.timestamp, v)))
    }

    /// Samples with `t0 <= timestamp < t1`, keeping grid and identity.
    pub fn slice(&self, t0: i64, t1: i64) -> MetricSeries {
        let samples = self
            .samples
            .iter()
            .filter(|s| s.timestamp >= t0 && s.timestamp < t1)
            .copied()
            .collect();
        MetricSeries {
            node_id: self.node_id.clone(),
            metric_name: self.metric_name.clone(),
            base_interval: self.base_interval,
            samples,
        }
    }

    /// Replaces the sample vector, revalidating the grid invariants.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<MetricSeries> {
        MetricSeries::new(
            self.node_id.clone(),
            self.metric_name.clone(),
            self.base_interval,
            samples,
        )
    }
}

/// Terminal scheduler states, following the SLURM vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Completed,
    Failed,
    Cancelled,
    Timeout,
    OutOfMemory,
    Requeued,
    NodeFailure,
}

impl JobState {
    pub const ALL: [JobState; 7] = [
        JobState::Completed,
        JobState::Failed,
        JobState::Cancelled,
        JobState::Timeout,
        JobState::OutOfMemory,
        JobState::Requeued,
        JobState::NodeFailure,
    ];

    /// True for states the failure analysis treats as unsuccessful with
    /// resource waste (failed outright, timed out, or ran out of memory).
    pub fn is_unsuccessful(self) -> bool {
        matches!(self, JobState::Failed | JobState::Timeout | JobState::OutOfMemory)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Completed => "COMPLETED",
            JobState::Failed => "FAILED",
            JobState::Cancelled => "CANCELLED",
            JobState::Timeout => "TIMEOUT",
            JobState::OutOfMemory => "OUT_OF_MEMORY",
            JobState::Requeued => "REQUEUED",
            JobState::NodeFailure => "NODE_FAILURE",
        }
    }
}

impl std::str::FromStr for JobState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "COMPLETED" => Ok(JobState::Completed),
            "FAILED" => Ok(JobState::Failed),
            "CANCELLED" => Ok(JobState::Cancelled),
            "TIMEOUT" => Ok(JobState::Timeout),
            "OUT_OF_MEMORY" => Ok(JobState::OutOfMemory),
            "REQUEUED" => Ok(JobState::Requeued),
            "NODE_FAILURE" => Ok(JobState::NodeFailure),
            other => Err(Error::RejectedInput(format!("unknown job state {other:?}"))),
        }
    }
}

impl std::fmt::Display for JobState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One scheduler job record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub user_id: String,
    pub submit_time: i64,
    pub start_time: i64,
    pub end_time: i64,
    pub cores_requested: u32,
    pub state: JobState,
    pub is_ml: bool,
    pub nodes: Vec<String>,
}

impl JobRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        job_id: impl Into<String>,
        user_id: impl Into<String>,
        submit_time: i64,
        start_time: i64,
        end_time: i64,
        cores_requested: u32,
        state: JobState,
        is_ml: bool,
        nodes: Vec<String>,
    ) -> Result<Self> {
        let job = JobRecord {
            job_id: job_id.into(),
            user_id: user_id.into(),
            submit_time,
            start_time,
            end_time,
            cores_requested,
            state,
            is_ml,
            nodes,
        };
        job.validate()?;
        Ok(job)
    }

    fn validate(&self) -> Result<()> {
        if !(self.submit_time <= self.start_time && self.start_time <= self.end_time) {
            return Err(Error::RejectedInput(format!(
                "job {}: require submit <= start <= end, got {} / {} / {}",
                self.job_id, self.submit_time, self.start_time, self.end_time
            )));
        }
        if self.cores_requested == 0 {
            return Err(Error::RejectedInput(format!(
                "job {}: cores_requested must be >= 1",
                self.job_id
            )));
        }
        Ok(())
    }

    /// Wall-clock runtime in seconds.
    pub fn runtime(&self) -> i64 {
        self.end_time - self.start_time
    }
}

/// Inventory entry for one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub rack_id: String,
    pub core_count: u32,
    pub is_ml_node: bool,
}

/// A named collection of metric series and job records plus the node
/// inventory they reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceBundle {
    series: Vec<MetricSeries>,
    jobs: Vec<JobRecord>,
    inventory: BTreeMap<String, NodeInfo>,
}

impl TraceBundle {
    pub fn new(
        mut series: Vec<MetricSeries>,
        jobs: Vec<JobRecord>,
        inventory: BTreeMap<String, NodeInfo>,
    ) -> Result<Self> {
        series.sort_by(|a, b| a.key().cmp(&b.key()));
        for pair in series.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(Error::RejectedInput(format!(
                    "duplicate series key {}",
                    pair[0].key()
                )));
            }
        }
        for job in &jobs {
            for node in &job.nodes {
                if !inventory.contains_key(node) {
                    return Err(Error::UnknownNode(format!(
                        "job {} references node {node} outside the inventory",
                        job.job_id
                    )));
                }
            }
        }
        Ok(TraceBundle { series, jobs, inventory })
    }

    pub fn series(&self) -> &[MetricSeries] {
        &self.series
    }

    pub fn jobs(&self) -> &[JobRecord] {
        &self.jobs
    }

    pub fn inventory(&self) -> &BTreeMap<String, NodeInfo> {
        &self.inventory
    }

    pub fn find(&self, key: &SeriesKey) -> Option<&MetricSeries> {
        self.series
            .binary_search_by(|s| s.key().cmp(key))
            .ok()
            .map(|i| &self.series[i])
    }

    /// All series carrying the given metric name, in key order.
    pub fn series_for_metric(&self, metric_name: &str) -> Vec<&MetricSeries> {
        self.series.iter().filter(|s| s.metric_name == metric_name).collect()
    }

    /// Distinct metric names present in the bundle, sorted.
    pub fn metric_names(&self) -> Vec<String> {
        let names: BTreeSet<String> =
            self.series.iter().map(|s| s.metric_name.clone()).collect();
        names.into_iter().collect()
    }

    /// Earliest and latest sample timestamp over all series, if any samples exist.
    pub fn time_span(&self) -> Option<(i64, i64)> {
        let mut span: Option<(i64, i64)> = None;
        for s in &self.series {
            let (Some(first), Some(last)) = (s.samples.first(), s.samples.last()) else {
                continue;
            };
            span = Some(match span {
                None => (first.timestamp, last.timestamp),
                Some((lo, hi)) => (lo.min(first.timestamp), hi.max(last.timestamp)),
            });
        }
        span
    }
}

/// Five equal-width intensity bands over a [0,1]-normalized value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityClass {
    VeryLow,
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl IntensityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            IntensityClass::VeryLow => "very_low",
            IntensityClass::Low => "low",
            IntensityClass::Moderate => "moderate",
            IntensityClass::High => "high",
            IntensityClass::VeryHigh => "very_high",
        }
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Downsamples a series into `bin_width`-second bins aligned to epoch
/// multiples of `bin_width`. Each output sample is the mean of the present
/// samples in its bin; a bin with no present samples becomes a missing
/// sample. Every bin between the first and last input timestamp is emitted,
/// so the output grid is gap-free with spacing exactly `bin_width`.
pub fn resample(series: &MetricSeries, bin_width: u32) -> Result<MetricSeries> {
    if bin_width == 0 || bin_width % series.base_interval != 0 {
        return Err(Error::RejectedInput(format!(
            "bin width {bin_width} is not a positive multiple of base interval {}",
            series.base_interval
        )));
    }
    if series.is_empty() {
        return Ok(MetricSeries {
            node_id: series.node_id.clone(),
            metric_name: series.metric_name.clone(),
            base_interval: bin_width,
            samples: Vec::new(),
        });
    }
    let w = i64::from(bin_width);
    let first_bin = floor_div(series.samples[0].timestamp, w);
    let last_bin = floor_div(series.samples[series.len() - 1].timestamp, w);
    let n_bins = usize::try_from(last_bin - first_bin + 1).expect("bin count overflow");

    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (t, v) in series.present_samples() {
        let idx = (floor_div(t, w) - first_bin) as usize;
        sums[idx] += v;
        counts[idx] += 1;
    }

    let samples = (0..n_bins)
        .map(|i| {
            let t = (first_bin + i as i64) * w;
            if counts[i] == 0 {
                Sample::missing(t)
            } else {
                Sample::present(t, sums[i] / counts[i] as f64)
            }
        })
        .collect();

    Ok(MetricSeries {
        node_id: series.node_id.clone(),
        metric_name: series.metric_name.clone(),
        base_interval: bin_width,
        samples,
    })
}

/// Min-max normalization to [0,1] over the present values. Missing slots
/// are preserved. A constant series cannot be normalized.
pub fn normalize_minmax(series: &MetricSeries) -> Result<MetricSeries> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in series.present_values() {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() {
        return Err(Error::EmptySeries(format!("{}: no present values", series.key())));
    }
    if min == max {
        return Err(Error::DegenerateInput(format!(
            "{}: constant series cannot be min-max normalized",
            series.key()
        )));
    }
    let range = max - min;
    let samples = series
        .samples
        .iter()
        .map(|s| Sample { timestamp: s.timestamp, value: s.value.map(|v| (v - min) / range) })
        .collect();
    Ok(MetricSeries {
        node_id: series.node_id.clone(),
        metric_name: series.metric_name.clone(),
        base_interval: series.base_interval,
        samples,
    })
}

/// Divides by the empirical 99th percentile and clips into [0,1]; negative
/// inputs clip to 0. Used to color heatmaps without letting outliers skew
/// the scale.
pub fn normalize_p99_clip(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::RejectedInput("p99 normalization of empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in p99 normalization".into()));
    }
    let p99 = stats::percentile(values, 99.0);
    if p99 <= 0.0 {
        return Err(Error::DegenerateInput(format!("99th percentile is {p99}, must be > 0")));
    }
    Ok(values.iter().map(|v| (v / p99).clamp(0.0, 1.0)).collect())
}

/// Maps a normalized value to its intensity band. 1.0 belongs to the top band.
pub fn classify_intensity(v: f64) -> Result<IntensityClass> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::RejectedInput(format!("intensity input {v} outside [0,1]")));
    }
    Ok(if v < 0.2 {
        IntensityClass::VeryLow
    } else if v < 0.4 {
        IntensityClass::Low
    } else if v < 0.6 {
        IntensityClass::Moderate
    } else if v < 0.8 {
        IntensityClass::High
    } else {
        IntensityClass::VeryHigh
    })
}

/// One heatmap cell: an hour and the class of its maximum present value,
/// or `None` where the hour held no valid data (rendered grey).
pub type HourClass = (i64, Option<IntensityClass>);

/// Classifies each hour covered by a [0,1]-normalized series by the maximum
/// present value observed in that hour (raw samples, not pre-binned).
pub fn hourly_max_class(series: &MetricSeries) -> Result<Vec<HourClass>> {
    const HOUR: i64 = 3600;
    if series.is_empty() {
        return Ok(Vec::new());
    }
    for v in series.present_values() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::RejectedInput(format!(
                "{}: hourly classification requires values in [0,1], got {v}",
                series.key()
            )));
        }
    }
    let first_hour = floor_div(series.samples[0].timestamp, HOUR);
    let last_hour = floor_div(series.samples[series.len() - 1].timestamp, HOUR);
    let n = usize::try_from(last_hour - first_hour + 1).expect("hour count overflow");
    let mut max_per_hour: Vec<Option<f64>> = vec![None; n];
    for (t, v) in series.present_samples() {
        let idx = (floor_div(t, HOUR) - first_hour) as usize;
        max_per_hour[idx] = Some(match max_per_hour[idx] {
            Some(m) => m.max(v),
            None => v,
        });
    }
    max_per_hour
        .into_iter()
        .enumerate()
        .map(|(i, max)| {
            let hour_start = (first_hour + i as i64) * HOUR;
            let class = max.map(classify_intensity).transpose()?;
            Ok((hour_start, class))
        })
        .collect()
}

/// Cluster-wide load utilization: per timestamp, the sum of present load1
/// values divided by the core count of the nodes present at that timestamp,
/// clipped into [0,1]. Nodes with no valid sample at a timestamp drop out of
/// both numerator and denominator.
pub fn cluster_load_utilization(
    load1: &[MetricSeries],
    inventory: &BTreeMap<String, NodeInfo>,
) -> Result<MetricSeries> {
    if load1.is_empty() {
        return Err(Error::RejectedInput("cluster utilization of empty node set".into()));
    }
    let base_interval = load1[0].base_interval;
    let mut seen = BTreeSet::new();
    for s in load1 {
        if s.base_interval != base_interval {
            return Err(Error::RejectedInput(format!(
                "{}: series not on the shared {}s grid",
                s.key(),
                base_interval
            )));
        }
        if !seen.insert(s.node_id.clone()) {
            return Err(Error::RejectedInput(format!(
                "duplicate load series for node {}",
                s.node_id
            )));
        }
        if !inventory.contains_key(&s.node_id) {
            return Err(Error::UnknownNode(s.node_id.clone()));
        }
    }

    let timestamps: BTreeSet<i64> =
        load1.iter().flat_map(|s| s.samples.iter().map(|x| x.timestamp)).collect();
    let mut sums: BTreeMap<i64, (f64, u64)> = timestamps.iter().map(|&t| (t, (0.0, 0))).collect();
    for s in load1 {
        let cores = u64::from(inventory[&s.node_id].core_count);
        for (t, v) in s.present_samples() {
            let entry = sums.get_mut(&t).expect("timestamp in union grid");
            entry.0 += v;
            entry.1 += cores;
        }
    }

    let samples = sums
        .into_iter()
        .map(|(t, (load_sum, cores))| {
            if cores == 0 {
                Sample::missing(t)
            } else {
                Sample::present(t, (load_sum / cores as f64).clamp(0.0, 1.0))
            }
        })
        .collect();

    MetricSeries::new("cluster", "cluster_load_utilization", base_interval, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(values: &[Option<f64>]) -> MetricSeries {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, v)| Sample { timestamp: i as i64 * 15, value: *v })
            .collect();
        MetricSeries::new("n1", "m", 15, samples).unwrap()
    }

    #[test]
    fn construction_rejects_bad_grids() {
        let err = MetricSeries::new(
            "n1",
            "m",
            15,
            vec![Sample::present(0, 1.0), Sample::present(20, 2.0)],
        );
        assert!(matches!(err, Err(Error::RejectedInput(_))));

        let err = MetricSeries::new(
            "n1",
            "m",
            15,
            vec![Sample::present(30, 1.0), Sample::present(15, 2.0)],
        );
        assert!(matches!(err, Err(Error::RejectedInput(_))));

        let err =
            MetricSeries::new("n1", "m", 15, vec![Sample::present(0, f64::NAN)]);
        assert!(matches!(err, Err(Error::RejectedInput(_))));
    }

    #[test]
    fn resample_means_within_bins() {
        let s = series(&[Some(2.0), Some(4.0)]);
        let out = resample(&s, 30).unwrap();
        assert_eq!(out.samples, vec![Sample::present(0, 3.0)]);
        assert_eq!(out.base_interval, 30);
    }

    #[test]
    fn resample_identity_when_bin_equals_interval() {
        let s = series(&[Some(1.0), None, Some(3.0)]);
        let out = resample(&s, 15).unwrap();
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn resample_constant_block_to_one_bin() {
        // 40 samples of value k at 15s collapse into a single 600s bin whose
        // mean is k again.
        let k = 7.25;
        let s = series(&vec![Some(k); 40]);
        let out = resample(&s, 600).unwrap();
        assert_eq!(out.samples, vec![Sample::present(0, k)]);
    }

    #[test]
    fn resample_rejects_non_multiple_bin() {
        let s = series(&[Some(1.0), Some(2.0)]);
        assert!(matches!(resample(&s, 20), Err(Error::RejectedInput(_))));
        assert!(matches!(resample(&s, 0), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn resample_emits_missing_for_empty_bins() {
        // Samples at t=0 and t=60 with 30s bins: bin [30,60) has no samples.
        let s = MetricSeries::new(
            "n1",
            "m",
            15,
            vec![Sample::present(0, 1.0), Sample::present(60, 2.0)],
        )
        .unwrap();
        let out = resample(&s, 30).unwrap();
        assert_eq!(
            out.samples,
            vec![
                Sample::present(0, 1.0),
                Sample::missing(30),
                Sample::present(60, 2.0),
            ]
        );
    }

    #[test]
    fn resample_is_idempotent() {
        let s = series(&[Some(1.0), Some(5.0), None, Some(2.0), Some(9.0), Some(4.0)]);
        let once = resample(&s, 45).unwrap();
        let twice = resample(&once, 45).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resample_conserves_mass() {
        let values: Vec<Option<f64>> = (0..101)
            .map(|i| if i % 7 == 3 { None } else { Some((i as f64 * 1.37).sin() * 40.0) })
            .collect();
        let s = series(&values);
        let out = resample(&s, 90).unwrap();

        let input_mean = stats::mean(&s.present_values().collect::<Vec<_>>());
        // Weighted mean of bin means, weights = present count per bin.
        let mut acc = 0.0;
        let mut weight = 0.0;
        for bin in &out.samples {
            if let Some(m) = bin.value {
                let lo = bin.timestamp;
                let hi = lo + 90;
                let count = s
                    .present_samples()
                    .filter(|(t, _)| *t >= lo && *t < hi)
                    .count() as f64;
                acc += m * count;
                weight += count;
            }
        }
        assert_abs_diff_eq!(acc / weight, input_mean, epsilon = 1e-12 * input_mean.abs());
    }

    #[test]
    fn minmax_normalizes_to_unit_range() {
        let s = series(&[Some(2.0), Some(4.0), Some(6.0)]);
        let out = normalize_minmax(&s).unwrap();
        let values: Vec<f64> = out.present_values().collect();
        assert_eq!(values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn minmax_identity_on_unit_range() {
        let s = series(&[Some(0.0), Some(0.25), Some(1.0)]);
        let out = normalize_minmax(&s).unwrap();
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn minmax_applied_twice_equals_once() {
        let s = series(&[Some(3.0), Some(-1.0), None, Some(10.0)]);
        let once = normalize_minmax(&s).unwrap();
        let twice = normalize_minmax(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn minmax_rejects_constant() {
        let s = series(&[Some(5.0), Some(5.0), Some(5.0)]);
        assert!(matches!(normalize_minmax(&s), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn p99_clip_examples() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let out = normalize_p99_clip(&values).unwrap();
        // p99 of 1..100 under linear interpolation is 99.01; the maximum
        // clips to 1 and 0 stays 0.
        assert_abs_diff_eq!(out[97], 98.0 / 99.01, epsilon = 1e-12);
        assert_eq!(out[99], 1.0);

        let constant = vec![4.2; 10];
        assert!(normalize_p99_clip(&constant).unwrap().iter().all(|&v| v == 1.0));

        let with_zero = vec![0.0, 5.0, 10.0];
        assert_eq!(normalize_p99_clip(&with_zero).unwrap()[0], 0.0);

        assert!(matches!(
            normalize_p99_clip(&[0.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn intensity_bands() {
        assert_eq!(classify_intensity(0.0).unwrap(), IntensityClass::VeryLow);
        assert_eq!(classify_intensity(0.5).unwrap(), IntensityClass::Moderate);
        assert_eq!(classify_intensity(1.0).unwrap(), IntensityClass::VeryHigh);
        assert_eq!(classify_intensity(0.2).unwrap(), IntensityClass::Low);
        assert!(classify_intensity(1.01).is_err());
        assert!(classify_intensity(-0.01).is_err());
    }

    #[test]
    fn intensity_is_monotone() {
        let mut prev = IntensityClass::VeryLow;
        for i in 0..=1000 {
            let class = classify_intensity(i as f64 / 1000.0).unwrap();
            assert!(class >= prev);
            prev = class;
        }
    }

    #[test]
    fn hourly_class_takes_the_max() {
        let mut samples = vec![Sample::present(0, 0.1), Sample::present(15, 0.95)];
        // Second hour entirely missing, third hour constant moderate.
        samples.push(Sample::missing(3600));
        samples.push(Sample::present(7200, 0.45));
        samples.push(Sample::present(7215, 0.45));
        let s = MetricSeries::new("n1", "m", 15, samples).unwrap();
        let classes = hourly_max_class(&s).unwrap();
        assert_eq!(
            classes,
            vec![
                (0, Some(IntensityClass::VeryHigh)),
                (3600, None),
                (7200, Some(IntensityClass::Moderate)),
            ]
        );
    }

    fn node(rack: &str, cores: u32) -> NodeInfo {
        NodeInfo { rack_id: rack.into(), core_count: cores, is_ml_node: false }
    }

    #[test]
    fn cluster_utilization_halves_and_clips() {
        let inventory: BTreeMap<String, NodeInfo> =
            [("a".to_string(), node("r1", 16)), ("b".to_string(), node("r1", 16))]
                .into_iter()
                .collect();
        let a = MetricSeries::new("a", "load1", 15, vec![Sample::present(0, 8.0)]).unwrap();
        let b = MetricSeries::new("b", "load1", 15, vec![Sample::present(0, 8.0)]).unwrap();
        let out = cluster_load_utilization(&[a, b], &inventory).unwrap();
        assert_eq!(out.samples, vec![Sample::present(0, 0.5)]);

        let a = MetricSeries::new("a", "load1", 15, vec![Sample::present(0, 40.0)]).unwrap();
        let b = MetricSeries::new("b", "load1", 15, vec![Sample::present(0, 40.0)]).unwrap();
        let out = cluster_load_utilization(&[a, b], &inventory).unwrap();
        assert_eq!(out.samples, vec![Sample::present(0, 1.0)]);
    }

    #[test]
    fn cluster_utilization_shrinks_denominator_when_node_missing() {
        let inventory: BTreeMap<String, NodeInfo> =
            [("a".to_string(), node("r1", 16)), ("b".to_string(), node("r1", 16))]
                .into_iter()
                .collect();
        let a = MetricSeries::new(
            "a",
            "load1",
            15,
            vec![Sample::present(0, 8.0), Sample::present(15, 8.0)],
        )
        .unwrap();
        let b = MetricSeries::new(
            "b",
            "load1",
            15,
            vec![Sample::present(0, 8.0), Sample::missing(15)],
        )
        .unwrap();
        let out = cluster_load_utilization(&[a, b], &inventory).unwrap();
        // At t=15 only node a is present: 8 / 16 cores.
        assert_eq!(
            out.samples,
            vec![Sample::present(0, 0.5), Sample::present(15, 0.5)]
        );

        assert!(matches!(
            cluster_load_utilization(&[], &inventory),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn bundle_rejects_duplicate_keys_and_unknown_nodes() {
        let inventory: BTreeMap<String, NodeInfo> =
            [("a".to_string(), node("r1", 16))].into_iter().collect();
        let s1 = MetricSeries::new("a", "m", 15, vec![Sample::present(0, 1.0)]).unwrap();
        let s2 = s1.clone();
        assert!(TraceBundle::new(vec![s1.clone(), s2], vec![], inventory.clone()).is_err());

        let job = JobRecord::new(
            "j1", "u1", 0, 0, 10, 1, JobState::Completed, false, vec!["ghost".into()],
        )
        .unwrap();
        assert!(matches!(
            TraceBundle::new(vec![s1], vec![job], inventory),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn job_record_validation() {
        assert!(JobRecord::new("j", "u", 10, 5, 20, 1, JobState::Completed, false, vec![])
            .is_err());
        assert!(JobRecord::new("j", "u", 0, 5, 20, 0, JobState::Completed, false, vec![])
            .is_err());
        let ok = JobRecord::new("j", "u", 0, 5, 20, 2, JobState::Failed, true, vec![]).unwrap();
        assert_eq!(ok.runtime(), 15);
    }
}
