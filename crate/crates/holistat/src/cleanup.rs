//! Trace cleanup: missing-measurement removal, constant-series elimination,
//! job filtering against a time window and node validity set, and the
//! two-period split used for before/after comparisons.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{JobRecord, MetricSeries, TraceBundle};

/// Counters describing what a cleanup pass removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    /// Total samples (present or missing) across all input series.
    pub input_measurements: u64,
    /// Missing samples removed.
    pub dropped_missing: u64,
    /// Series removed because their present values never change
    /// (or because nothing remained after missing-data removal).
    pub dropped_constant_series: u64,
    /// Jobs removed by the window/node filter.
    pub dropped_jobs: u64,
    /// Distinct nodes still carrying at least one series afterwards.
    pub retained_nodes: u64,
}

/// Removes every missing sample. Fails if nothing remains.
pub fn drop_missing(series: &MetricSeries) -> Result<MetricSeries> {
    let samples: Vec<_> = series.samples.iter().filter(|s| s.value.is_some()).copied().collect();
    if samples.is_empty() {
        return Err(Error::EmptySeries(format!(
            "{}: no present samples after missing-data removal",
            series.key()
        )));
    }
    series.with_samples(samples)
}

/// True iff all present values are bit-identical (missing samples ignored).
/// Vacuously true when fewer than two present values exist.
pub fn is_constant(series: &MetricSeries) -> bool {
    let mut present = series.present_values();
    let Some(first) = present.next() else { return true };
    let bits = first.to_bits();
    present.all(|v| v.to_bits() == bits)
}

/// Keeps jobs whose start time lies inside `[t0, t1]` and whose nodes are
/// all in `valid_nodes`. Retained records are returned unmodified.
pub fn filter_jobs(
    jobs: &[JobRecord],
    window: (i64, i64),
    valid_nodes: &BTreeSet<String>,
) -> Result<Vec<JobRecord>> {
    let (t0, t1) = window;
    if t0 >= t1 {
        return Err(Error::RejectedInput(format!(
            "job filter window [{t0}, {t1}] is empty"
        )));
    }
    Ok(jobs
        .iter()
        .filter(|j| {
            j.start_time >= t0
                && j.start_time <= t1
                && j.nodes.iter().all(|n| valid_nodes.contains(n))
        })
        .cloned()
        .collect())
}

/// Outcome of a two-period split. `pivot_outside_span` warns that the pivot
/// missed the data entirely, leaving one side empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSplit<T> {
    pub before: T,
    pub after: T,
    pub pivot_outside_span: bool,
}

/// Splits a series at `pivot`: samples strictly earlier go to `before`,
/// samples at or after the pivot go to `after`.
pub fn split_series(series: &MetricSeries, pivot: i64) -> PeriodSplit<MetricSeries> {
    let before = series.slice(i64::MIN, pivot);
    let after = series.slice(pivot, i64::MAX);
    let outside = !series.is_empty() && (before.is_empty() || after.is_empty());
    PeriodSplit { before, after, pivot_outside_span: outside }
}

/// Splits jobs at `pivot` by start time: strictly earlier starts go to
/// `before`, starts at or after the pivot go to `after`.
pub fn split_jobs(jobs: &[JobRecord], pivot: i64) -> PeriodSplit<Vec<JobRecord>> {
    let (before, after): (Vec<_>, Vec<_>) =
        jobs.iter().cloned().partition(|j| j.start_time < pivot);
    let outside = !jobs.is_empty() && (before.is_empty() || after.is_empty());
    PeriodSplit { before, after, pivot_outside_span: outside }
}

/// Full cleanup pass over a bundle: strips missing samples, removes
/// constant and emptied series, and filters jobs against the window and a
/// node validity set. `window` defaults to the bundle's own sample span;
/// `valid_nodes` defaults to the entire inventory.
pub fn clean_bundle(
    bundle: &TraceBundle,
    window: Option<(i64, i64)>,
    valid_nodes: Option<&BTreeSet<String>>,
) -> Result<(TraceBundle, CleanReport)> {
    let mut report = CleanReport::default();
    let mut kept_series = Vec::new();
    for series in bundle.series() {
        report.input_measurements += series.len() as u64;
        let missing = series.samples.iter().filter(|s| s.value.is_none()).count() as u64;
        match drop_missing(series) {
            Ok(cleaned) => {
                report.dropped_missing += missing;
                if is_constant(&cleaned) {
                    report.dropped_constant_series += 1;
                } else {
                    kept_series.push(cleaned);
                }
            }
            Err(Error::EmptySeries(_)) => {
                report.dropped_missing += missing;
                report.dropped_constant_series += 1;
            }
            Err(e) => return Err(e),
        }
    }

    let all_nodes: BTreeSet<String> = bundle.inventory().keys().cloned().collect();
    let nodes = valid_nodes.unwrap_or(&all_nodes);
    let window = match window {
        Some(w) => w,
        None => bundle.time_span().unwrap_or((i64::MIN, i64::MAX - 1)),
    };
    // A span collapsed to a single instant still admits jobs at that instant.
    let window = if window.0 == window.1 { (window.0, window.1 + 1) } else { window };
    let kept_jobs = filter_jobs(bundle.jobs(), window, nodes)?;
    report.dropped_jobs = (bundle.jobs().len() - kept_jobs.len()) as u64;

    let retained: BTreeSet<&str> = kept_series.iter().map(|s| s.node_id.as_str()).collect();
    report.retained_nodes = retained.len() as u64;

    let cleaned = TraceBundle::new(kept_series, kept_jobs, bundle.inventory().clone())?;
    Ok((cleaned, report))
}
