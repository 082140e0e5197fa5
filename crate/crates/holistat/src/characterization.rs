//! Descriptive statistics over traces and job records: ECDFs, histograms,
//! boxplots, arrival patterns, per-user variation, job-state breakdowns,
//! runtime accounting, CPU-hour footprints, per-rack aggregation, two-period
//! comparison, and the anomaly/job cross-reference.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::cleanup::split_series;
use crate::error::{Error, Result};
use crate::stats;
use crate::trace::{JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle};

/// Empirical CDF evaluated at the distinct sample values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    pub values: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl EcdfCurve {
    /// Fraction of samples at or below `v` (0 below the minimum, 1 at and
    /// beyond the maximum).
    pub fn fraction_at(&self, v: f64) -> f64 {
        match self.values.partition_point(|&x| x <= v) {
            0 => 0.0,
            i => self.fractions[i - 1],
        }
    }
}

pub fn ecdf(values: &[f64]) -> Result<EcdfCurve> {
    if values.is_empty() {
        return Err(Error::RejectedInput("ECDF of empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in ECDF input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let mut out_values = Vec::new();
    let mut fractions = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        out_values.push(sorted[i]);
        fractions.push((j + 1) as f64 / n);
        i = j + 1;
    }
    Ok(EcdfCurve { values: out_values, fractions })
}

/// Equal-purpose histogram: `counts[i]` covers `[bin_edges[i], bin_edges[i+1])`,
/// with the final bin closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Integer-width histogram of requested core counts; the mode is the
/// smallest core count with the highest frequency.
pub fn core_histogram(jobs: &[JobRecord]) -> Result<(Histogram, u32)> {
    if jobs.is_empty() {
        return Err(Error::RejectedInput("core histogram of zero jobs".into()));
    }
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for j in jobs {
        *counts.entry(j.cores_requested).or_insert(0) += 1;
    }
    let lo = *counts.keys().next().expect("non-empty");
    let hi = *counts.keys().next_back().expect("non-empty");
    let bin_edges: Vec<f64> = (lo..=hi + 1).map(f64::from).collect();
    let hist_counts: Vec<u64> = (lo..=hi).map(|c| counts.get(&c).copied().unwrap_or(0)).collect();
    let mode = *counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("non-empty")
        .0;
    Ok((Histogram { bin_edges, counts: hist_counts }, mode))
}

/// Tukey boxplot summary with the interquartile fences clamped to the data
/// range; outliers fall strictly outside the whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::RejectedInput("boxplot of empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in boxplot input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = stats::percentile_of_sorted(&sorted, 25.0);
    let median = stats::percentile_of_sorted(&sorted, 50.0);
    let q3 = stats::percentile_of_sorted(&sorted, 75.0);
    let iqr = q3 - q1;
    let whisker_low = sorted[0].max(q1 - 1.5 * iqr);
    let whisker_high = sorted[sorted.len() - 1].min(q3 + 1.5 * iqr);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < whisker_low || v > whisker_high)
        .collect();
    Ok(BoxplotStats { q1, median, q3, whisker_low, whisker_high, outliers })
}

/// Runtime distribution of the jobs surviving a state filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub ecdf: EcdfCurve,
    pub count: usize,
}

impl DurationStats {
    /// Fraction of the filtered jobs with runtime at or below `seconds`.
    pub fn fraction_below(&self, seconds: i64) -> f64 {
        self.ecdf.fraction_at(seconds as f64)
    }
}

/// Runtime ECDF over jobs in the given states (all states when the filter
/// is empty).
pub fn duration_stats(jobs: &[JobRecord], states: &[JobState]) -> Result<DurationStats> {
    let durations: Vec<f64> = jobs
        .iter()
        .filter(|j| states.is_empty() || states.contains(&j.state))
        .map(|j| j.runtime() as f64)
        .collect();
    if durations.is_empty() {
        return Err(Error::RejectedInput("no jobs left after the state filter".into()));
    }
    let count = durations.len();
    Ok(DurationStats { ecdf: ecdf(&durations)?, count })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArrivalGroup {
    HourOfDay,
    DayOfWeek,
    CalendarDay,
}

impl std::str::FromStr for ArrivalGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HOUR_OF_DAY" => Ok(ArrivalGroup::HourOfDay),
            "DAY_OF_WEEK" => Ok(ArrivalGroup::DayOfWeek),
            "CALENDAR_DAY" => Ok(ArrivalGroup::CalendarDay),
            other => Err(Error::RejectedInput(format!("unknown arrival grouping {other:?}"))),
        }
    }
}

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Job arrivals by submit time under the UTC calendar. Calendar-day groups
/// report raw counts over the contiguous span between the first and last
/// submission; hour-of-day and day-of-week groups report the mean count per
/// occurrence of the group within that span, with all 24 (or 7) groups
/// present. Empty input yields an empty table.
pub fn arrivals_grouped(jobs: &[JobRecord], group: ArrivalGroup) -> Vec<(String, f64)> {
    if jobs.is_empty() {
        return Vec::new();
    }
    let dates: Vec<NaiveDate> =
        jobs.iter().map(|j| crate::correlation::utc_day(j.submit_time)).collect();
    let first = *dates.iter().min().expect("non-empty");
    let last = *dates.iter().max().expect("non-empty");
    let span_days = (last - first).num_days() + 1;

    match group {
        ArrivalGroup::CalendarDay => {
            let mut counts: BTreeMap<NaiveDate, u64> = BTreeMap::new();
            let mut d = first;
            while d <= last {
                counts.insert(d, 0);
                d = d.succ_opt().expect("date in range");
            }
            for date in dates {
                *counts.get_mut(&date).expect("date within span") += 1;
            }
            counts.into_iter().map(|(d, c)| (d.to_string(), c as f64)).collect()
        }
        ArrivalGroup::HourOfDay => {
            let mut counts = [0u64; 24];
            for j in jobs {
                let hour = chrono::DateTime::from_timestamp(j.submit_time, 0)
                    .expect("timestamp in chrono range")
                    .hour();
                counts[hour as usize] += 1;
            }
            // Every date in the span contains every hour exactly once.
            (0..24).map(|h| (format!("{h:02}"), counts[h] as f64 / span_days as f64)).collect()
        }
        ArrivalGroup::DayOfWeek => {
            let mut occurrences: BTreeMap<u32, u64> = BTreeMap::new();
            let mut d = first;
            while d <= last {
                *occurrences.entry(d.weekday().num_days_from_monday()).or_insert(0) += 1;
                d = d.succ_opt().expect("date in range");
            }
            let mut counts = [0u64; 7];
            for date in dates {
                counts[date.weekday().num_days_from_monday() as usize] += 1;
            }
            WEEKDAYS
                .iter()
                .map(|wd| {
                    let idx = wd.num_days_from_monday();
                    let occ = occurrences.get(&idx).copied().unwrap_or(0);
                    let mean = if occ == 0 { 0.0 } else { counts[idx as usize] as f64 / occ as f64 };
                    (wd.to_string(), mean)
                })
                .collect()
        }
    }
}

/// Spread of one user's core requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCov {
    pub user_id: String,
    /// Sample std of requested cores divided by their mean.
    pub cov: f64,
    pub jobs: usize,
    /// True when the user has a single job, where the CoV of 0 is
    /// definitional rather than observed.
    pub singleton: bool,
}

/// Coefficient of variation of requested cores per user, sorted by
/// descending CoV (user id breaks ties).
pub fn cov_per_user(jobs: &[JobRecord]) -> Vec<UserCov> {
    let mut by_user: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for j in jobs {
        by_user.entry(&j.user_id).or_default().push(f64::from(j.cores_requested));
    }
    let mut out: Vec<UserCov> = by_user
        .into_iter()
        .map(|(user, cores)| {
            let singleton = cores.len() == 1;
            let cov = if singleton {
                0.0
            } else {
                stats::sample_std(&cores) / stats::mean(&cores)
            };
            UserCov { user_id: user.to_string(), cov, jobs: cores.len(), singleton }
        })
        .collect();
    out.sort_by(|a, b| {
        b.cov.partial_cmp(&a.cov).expect("finite CoV").then_with(|| a.user_id.cmp(&b.user_id))
    });
    out
}

/// Fraction of jobs per terminal state; fractions sum to 1.
pub fn state_fractions(jobs: &[JobRecord]) -> Result<BTreeMap<JobState, f64>> {
    if jobs.is_empty() {
        return Err(Error::RejectedInput("state fractions of zero jobs".into()));
    }
    let mut counts: BTreeMap<JobState, u64> = BTreeMap::new();
    for j in jobs {
        *counts.entry(j.state).or_insert(0) += 1;
    }
    let n = jobs.len() as f64;
    Ok(counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect())
}

/// One runtime-length bin with per-state runtime totals (integer seconds,
/// so conservation against the input is exact).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeBin {
    /// Inclusive lower runtime bound; 0 for the first bin.
    pub lo: i64,
    /// Exclusive upper bound; `None` for the open-ended last bin.
    pub hi: Option<i64>,
    pub by_state: BTreeMap<JobState, u64>,
}

impl RuntimeBin {
    pub fn total(&self) -> u64 {
        self.by_state.values().sum()
    }
}

/// Sums job runtimes into length bins, stacked by job state. `edges` are
/// strictly increasing interior boundaries: with edges e1 < e2 the bins are
/// [0,e1), [e1,e2), [e2, inf).
pub fn runtime_by_length_and_state(
    jobs: &[JobRecord],
    edges: &[i64],
) -> Result<Vec<RuntimeBin>> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::RejectedInput("length bin edges must strictly increase".into()));
    }
    if edges.first().is_some_and(|&e| e <= 0) {
        return Err(Error::RejectedInput("length bin edges must be positive".into()));
    }
    let mut bins: Vec<RuntimeBin> = Vec::with_capacity(edges.len() + 1);
    let mut lo = 0;
    for &e in edges {
        bins.push(RuntimeBin { lo, hi: Some(e), by_state: BTreeMap::new() });
        lo = e;
    }
    bins.push(RuntimeBin { lo, hi: None, by_state: BTreeMap::new() });

    for j in jobs {
        let runtime = j.runtime();
        let idx = edges.partition_point(|&e| e <= runtime);
        *bins[idx].by_state.entry(j.state).or_insert(0) += runtime as u64;
    }
    Ok(bins)
}

/// Requested cores x wall-clock runtime, attributed proportionally to the
/// UTC days each job spans. Covers the contiguous day range touched by any
/// job; days without load report 0.
pub fn cpu_hours_per_day(jobs: &[JobRecord]) -> Vec<(NaiveDate, f64)> {
    let running: Vec<&JobRecord> = jobs.iter().filter(|j| j.runtime() > 0).collect();
    if running.is_empty() {
        return Vec::new();
    }
    let first = crate::correlation::utc_day(
        running.iter().map(|j| j.start_time).min().expect("non-empty"),
    );
    let last = crate::correlation::utc_day(
        // end_time is exclusive: a job ending exactly at midnight spent no
        // time in the day that starts there.
        running.iter().map(|j| j.end_time - 1).max().expect("non-empty"),
    );
    let mut totals: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut d = first;
    while d <= last {
        totals.insert(d, 0.0);
        d = d.succ_opt().expect("date in range");
    }
    for j in running {
        let mut day = crate::correlation::utc_day(j.start_time);
        loop {
            let (day_lo, day_hi) = crate::correlation::day_bounds(day);
            let overlap = j.end_time.min(day_hi) - j.start_time.max(day_lo);
            if overlap <= 0 {
                break;
            }
            let hours = f64::from(j.cores_requested) * overlap as f64 / 3600.0;
            *totals.get_mut(&day).expect("day within span") += hours;
            day = day.succ_opt().expect("date in range");
        }
    }
    totals.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RackStatistic {
    Mean,
    Std,
    Boxplot,
}

/// Aggregate over all present values of one rack's member series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RackAggregate {
    pub rack_id: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub boxplot: Option<BoxplotStats>,
}

/// Pools each rack's present values (over every member node's series) and
/// computes the requested statistic. Racks with no data are skipped and
/// reported separately. The spread statistic is the population standard
/// deviation, so duplicating a node's data leaves the rack's spread
/// unchanged.
pub fn rack_aggregate(
    series: &[MetricSeries],
    inventory: &BTreeMap<String, NodeInfo>,
    statistic: RackStatistic,
) -> Result<(Vec<RackAggregate>, Vec<String>)> {
    let mut values_by_rack: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for node in inventory.values() {
        values_by_rack.entry(&node.rack_id).or_default();
    }
    for s in series {
        let Some(info) = inventory.get(&s.node_id) else {
            return Err(Error::UnknownNode(format!(
                "{} is not in the inventory",
                s.node_id
            )));
        };
        values_by_rack
            .get_mut(info.rack_id.as_str())
            .expect("rack registered above")
            .extend(s.present_values());
    }

    let mut aggregates = Vec::new();
    let mut skipped = Vec::new();
    for (rack, values) in values_by_rack {
        if values.is_empty() {
            skipped.push(rack.to_string());
            continue;
        }
        let mut agg = RackAggregate {
            rack_id: rack.to_string(),
            n: values.len(),
            mean: None,
            std: None,
            boxplot: None,
        };
        match statistic {
            RackStatistic::Mean => agg.mean = Some(stats::mean(&values)),
            RackStatistic::Std => agg.std = Some(stats::population_std(&values)),
            RackStatistic::Boxplot => agg.boxplot = Some(boxplot_stats(&values)?),
        }
        aggregates.push(agg);
    }
    Ok((aggregates, skipped))
}

/// Mean/std/count of one side of a period split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Before/after comparison of one metric on one rack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCompareRow {
    pub metric: String,
    pub rack_id: String,
    pub before: Option<SideStats>,
    pub after: Option<SideStats>,
    /// `after.mean - before.mean`; `None` when either side is empty.
    pub delta_mean: Option<f64>,
}

/// Splits every series of the listed metrics at `pivot`, aggregates each
/// side per rack, and reports the mean shift. Rows are ordered by
/// (metric, rack).
pub fn period_compare(
    bundle: &TraceBundle,
    pivot: i64,
    metrics: &[String],
) -> Result<Vec<PeriodCompareRow>> {
    let mut rows = Vec::new();
    for metric in metrics {
        let mut before_by_rack: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut after_by_rack: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut racks: BTreeSet<&str> = BTreeSet::new();
        for s in bundle.series_for_metric(metric) {
            let Some(info) = bundle.inventory().get(&s.node_id) else {
                return Err(Error::UnknownNode(format!(
                    "{} is not in the inventory",
                    s.node_id
                )));
            };
            racks.insert(&info.rack_id);
            let split = split_series(s, pivot);
            before_by_rack
                .entry(&info.rack_id)
                .or_default()
                .extend(split.before.present_values());
            after_by_rack
                .entry(&info.rack_id)
                .or_default()
                .extend(split.after.present_values());
        }
        for rack in racks {
            let side = |values: Option<&Vec<f64>>| -> Option<SideStats> {
                let values = values?;
                if values.is_empty() {
                    return None;
                }
                Some(SideStats {
                    mean: stats::mean(values),
                    std: stats::population_std(values),
                    n: values.len(),
                })
            };
            let before = side(before_by_rack.get(rack));
            let after = side(after_by_rack.get(rack));
            let delta_mean = match (&before, &after) {
                (Some(b), Some(a)) => Some(a.mean - b.mean),
                _ => None,
            };
            rows.push(PeriodCompareRow {
                metric: metric.clone(),
                rack_id: rack.to_string(),
                before,
                after,
                delta_mean,
            });
        }
    }
    Ok(rows)
}

/// For each flagged timestamp, the unsuccessful jobs (failed, timed out, or
/// out of memory) whose padded run interval covers it.
pub fn join_anomalies_jobs(
    flagged: &[i64],
    jobs: &[JobRecord],
    slack: i64,
) -> Result<Vec<(i64, Vec<String>)>> {
    if slack < 0 {
        return Err(Error::RejectedInput(format!("negative join slack {slack}")));
    }
    let failed: Vec<&JobRecord> = jobs.iter().filter(|j| j.state.is_unsuccessful()).collect();
    Ok(flagged
        .iter()
        .map(|&t| {
            let mut ids: Vec<String> = failed
                .iter()
                .filter(|j| j.start_time - slack <= t && t <= j.end_time + slack)
                .map(|j| j.job_id.clone())
                .collect();
            ids.sort();
            (t, ids)
        })
        .collect())
}
