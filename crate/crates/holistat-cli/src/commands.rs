use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde_json::{json, Value};

use holistat::anomaly::{detect_anomalies, moving_zscore};
use holistat::characterization::{
    arrivals_grouped, core_histogram, cov_per_user, cpu_hours_per_day, duration_stats,
    join_anomalies_jobs, period_compare, rack_aggregate, runtime_by_length_and_state,
    state_fractions, ArrivalGroup, RackStatistic,
};
use holistat::cleanup::{clean_bundle, split_jobs, split_series};
use holistat::correlation::{
    all_pairs, classify_strength, day_bounds, days_covered, persistent_pairs, CorrMethod,
    DailyPairSet, StrengthBands,
};
use holistat::predictor::{train, TrainConfig, INPUT_SPAN_SECONDS};
use holistat::storage::{compression_study, DeflateCodec};
use holistat::synth::{gen_bundle, presets, GeneratorSpec};
use holistat::trace::{cluster_load_utilization, hourly_max_class, normalize_p99_clip, resample};
use holistat::{IntensityClass, MetricSeries, TraceBundle};

use crate::error::{CliError, Result};
use crate::io;
use crate::svg;

/// Runtime-length bin edges (seconds) used by the characterization tables.
const RUNTIME_EDGES: [i64; 5] = [60, 300, 1_800, 7_200, 21_600];
const INTENSITY_LEGEND: [&str; 5] = ["very_low", "low", "moderate", "high", "very_high"];

/// One output directory plus the ledger of artifacts written into it.
pub struct Out {
    root: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl Out {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Out { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn into_artifacts(self) -> Vec<(String, String)> {
        self.artifacts
    }

    pub fn artifact_names(&self) -> Vec<String> {
        self.artifacts.iter().map(|(name, _)| name.clone()).collect()
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8], desc: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push((rel.to_string(), desc.to_string()));
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, rel: &str, value: &T, desc: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Config(format!("serializing {rel}: {e}")))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes(), desc)
    }

    pub fn write_csv(
        &mut self,
        rel: &str,
        header: &[&str],
        rows: &[Vec<String>],
        desc: &str,
    ) -> Result<()> {
        let bytes = io::csv_bytes(header, rows);
        self.write_bytes(rel, &bytes, desc)
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------------------
// ingest

pub fn ingest(out: &mut Out, bundle: &TraceBundle) -> Result<Value> {
    let (cleaned, report) = clean_bundle(bundle, None, None)?;
    write_normalized(out, &cleaned)?;
    out.write_json("clean_report.json", &report, "cleanup accounting for the ingest pass")?;
    Ok(json!({
        "series": cleaned.series().len(),
        "jobs": cleaned.jobs().len(),
        "nodes": cleaned.inventory().len(),
        "dropped_missing": report.dropped_missing,
        "dropped_constant_series": report.dropped_constant_series,
        "artifacts": out.artifact_names(),
    }))
}

fn write_normalized(out: &mut Out, bundle: &TraceBundle) -> Result<()> {
    if !bundle.series().is_empty() {
        let bytes = io::encode_hstrace(bundle.series())?;
        out.write_bytes("trace.hstrace", &bytes, "normalized columnar telemetry")?;
    }
    if !bundle.jobs().is_empty() {
        out.write_csv(
            "jobs.csv",
            &io::JOB_HEADER,
            &io::jobs_rows(bundle.jobs()),
            "normalized job table",
        )?;
    }
    if !bundle.inventory().is_empty() {
        out.write_csv(
            "inventory.csv",
            &io::INVENTORY_HEADER,
            &io::inventory_rows(bundle.inventory()),
            "normalized node inventory",
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// clean

pub fn clean(
    out: &mut Out,
    bundle: &TraceBundle,
    window: Option<(i64, i64)>,
    service_racks: &[String],
    pivot: Option<i64>,
) -> Result<Value> {
    let valid_nodes: Option<BTreeSet<String>> = if service_racks.is_empty() {
        None
    } else {
        if bundle.inventory().is_empty() {
            return Err(CliError::Config(
                "--service-racks requires an inventory file".into(),
            ));
        }
        let service: BTreeSet<&str> = service_racks.iter().map(String::as_str).collect();
        Some(
            bundle
                .inventory()
                .iter()
                .filter(|(_, info)| !service.contains(info.rack_id.as_str()))
                .map(|(node, _)| node.clone())
                .collect(),
        )
    };
    let (cleaned, report) = clean_bundle(bundle, window, valid_nodes.as_ref())?;

    let Some(pivot) = pivot else {
        write_normalized(out, &cleaned)?;
        out.write_json("clean_report.json", &report, "cleanup accounting")?;
        return Ok(json!({
            "series": cleaned.series().len(),
            "jobs": cleaned.jobs().len(),
            "report": report,
            "artifacts": out.artifact_names(),
        }));
    };

    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut series_pivot_outside = false;
    for s in cleaned.series() {
        let split = split_series(s, pivot);
        series_pivot_outside |= split.pivot_outside_span;
        if !split.before.is_empty() {
            before.push(split.before);
        }
        if !split.after.is_empty() {
            after.push(split.after);
        }
    }
    let jobs_split = split_jobs(cleaned.jobs(), pivot);

    for (name, series, jobs) in [
        ("before", &before, &jobs_split.before),
        ("after", &after, &jobs_split.after),
    ] {
        if !series.is_empty() {
            let bytes = io::encode_hstrace(series)?;
            out.write_bytes(
                &format!("{name}/trace.hstrace"),
                &bytes,
                "telemetry on one side of the pivot",
            )?;
        }
        if !jobs.is_empty() {
            out.write_csv(
                &format!("{name}/jobs.csv"),
                &io::JOB_HEADER,
                &io::jobs_rows(jobs),
                "jobs on one side of the pivot (split on start time)",
            )?;
        }
    }
    if !cleaned.inventory().is_empty() {
        out.write_csv(
            "inventory.csv",
            &io::INVENTORY_HEADER,
            &io::inventory_rows(cleaned.inventory()),
            "node inventory (shared by both sides)",
        )?;
    }
    let split_report = json!({
        "pivot": pivot,
        "series_before": before.len(),
        "series_after": after.len(),
        "jobs_before": jobs_split.before.len(),
        "jobs_after": jobs_split.after.len(),
        "series_pivot_outside_span": series_pivot_outside,
        "jobs_pivot_outside_span": jobs_split.pivot_outside_span,
        "clean_report": report,
    });
    out.write_json("split_report.json", &split_report, "pivot split accounting")?;
    Ok(json!({ "split": split_report, "artifacts": out.artifact_names() }))
}

// ---------------------------------------------------------------------------
// correlate

pub struct CorrelateOpts {
    pub method: CorrMethod,
    pub strong: f64,
    pub resample_width: u32,
    pub days: Vec<NaiveDate>,
    pub drop_partial_bins: bool,
}

/// Drops the first/last resampled bin when the raw span covered it only
/// partially.
fn trim_partial_bins(raw: &MetricSeries, resampled: MetricSeries, width: u32) -> MetricSeries {
    if raw.is_empty() || resampled.is_empty() {
        return resampled;
    }
    let raw_first = raw.samples[0].timestamp;
    let raw_end = raw.samples[raw.len() - 1].timestamp + i64::from(raw.base_interval);
    let mut samples = resampled.samples;
    if samples.last().is_some_and(|s| s.timestamp + i64::from(width) > raw_end) {
        samples.pop();
    }
    if samples.first().is_some_and(|s| s.timestamp < raw_first) {
        samples.remove(0);
    }
    MetricSeries { samples, ..resampled }
}

pub fn correlate(out: &mut Out, bundle: &TraceBundle, opts: &CorrelateOpts) -> Result<Value> {
    if !(0.0..=1.0).contains(&opts.strong) {
        return Err(CliError::Config(format!(
            "--strong {} outside [0, 1]",
            opts.strong
        )));
    }
    let (cleaned, clean_report) = clean_bundle(bundle, None, None)?;
    let series: Vec<MetricSeries> = if opts.resample_width == 0 {
        cleaned.series().to_vec()
    } else {
        cleaned
            .series()
            .iter()
            .map(|s| {
                let r = resample(s, opts.resample_width)?;
                Ok(if opts.drop_partial_bins {
                    trim_partial_bins(s, r, opts.resample_width)
                } else {
                    r
                })
            })
            .collect::<holistat::Result<_>>()?
    };
    let working = TraceBundle::new(series, Vec::new(), cleaned.inventory().clone())?;
    let days: Vec<NaiveDate> =
        if opts.days.is_empty() { days_covered(&working) } else { opts.days.clone() };
    if days.is_empty() {
        return Err(CliError::Config("no days of data to correlate".into()));
    }

    let per_day: Vec<_> = days
        .par_iter()
        .map(|&day| {
            let (lo, hi) = day_bounds(day);
            let day_series: Vec<MetricSeries> =
                working.series().iter().map(|s| s.slice(lo, hi)).collect();
            let day_bundle = TraceBundle::new(day_series, Vec::new(), BTreeMap::new())?;
            let (results, skips) = all_pairs(&day_bundle, opts.method)?;
            Ok((day, results, skips))
        })
        .collect::<holistat::Result<_>>()?;

    let bands = StrengthBands::default();
    let mut rows = Vec::new();
    for (day, results, _) in &per_day {
        for r in results {
            rows.push(vec![
                day.to_string(),
                r.metric_a.node_id.clone(),
                r.metric_a.metric_name.clone(),
                r.metric_b.node_id.clone(),
                r.metric_b.metric_name.clone(),
                r.method.as_str().to_string(),
                fmt(r.coefficient),
                fmt(r.p_value),
                r.n.to_string(),
                classify_strength(r.coefficient, &bands).as_str().to_string(),
            ])
        }
    }
    out.write_csv(
        "correlations_daily.csv",
        &[
            "day", "node_a", "metric_a", "node_b", "metric_b", "method", "coefficient",
            "p_value", "n", "strength",
        ],
        &rows,
        "per-day all-pairs correlation table",
    )?;

    let daily_sets: Vec<DailyPairSet> = per_day
        .iter()
        .map(|(day, results, _)| DailyPairSet::from_results(*day, results, opts.strong))
        .collect();
    let persistence = persistent_pairs(&daily_sets)?;
    let computed: u64 = per_day.iter().map(|(_, _, s)| s.computed).sum();
    let skipped_short: u64 = per_day.iter().map(|(_, _, s)| s.skipped_short).sum();
    let skipped_constant: u64 = per_day.iter().map(|(_, _, s)| s.skipped_constant).sum();

    let persistence_json = json!({
        "method": opts.method.as_str(),
        "threshold": opts.strong,
        "per_day": persistence.per_day.iter()
            .map(|(day, count)| json!({ "day": day.to_string(), "strong_pairs": count }))
            .collect::<Vec<_>>(),
        "persistent": persistence.persistent.iter()
            .map(|(a, b)| json!({
                "node_a": a.node_id, "metric_a": a.metric_name,
                "node_b": b.node_id, "metric_b": b.metric_name,
            }))
            .collect::<Vec<_>>(),
        "pairs_computed": computed,
        "pairs_skipped_short": skipped_short,
        "pairs_skipped_constant": skipped_constant,
    });
    out.write_json("persistence.json", &persistence_json, "cross-day persistent pair report")?;

    let persistent_total = persistence.persistent.len();
    let fig_rows: Vec<Vec<String>> = persistence
        .per_day
        .iter()
        .map(|(day, count)| {
            vec![day.to_string(), count.to_string(), persistent_total.to_string()]
        })
        .collect();
    out.write_csv(
        "fig_persistence.csv",
        &["day", "strong_pairs", "persistent_total"],
        &fig_rows,
        "figure twin: per-day strong-pair counts",
    )?;
    let bars: Vec<(String, f64)> = persistence
        .per_day
        .iter()
        .map(|(day, count)| (day.to_string(), *count as f64))
        .collect();
    let fig = svg::bar_chart(
        &format!("Strong pairs per day ({} >= {})", opts.method.as_str(), opts.strong),
        "day",
        "strong pairs",
        &bars,
        Some((persistent_total as f64, "persistent across all days")),
    );
    out.write_bytes("fig_persistence.svg", fig.as_bytes(), "per-day strong-pair counts")?;

    Ok(json!({
        "days": days.len(),
        "persistent_pairs": persistent_total,
        "pairs_computed": computed,
        "clean_report": clean_report,
        "artifacts": out.artifact_names(),
    }))
}

// ---------------------------------------------------------------------------
// anomaly

pub struct AnomalyOpts {
    pub window: usize,
    pub percentile: f64,
    pub node: Option<String>,
    pub metric: Option<String>,
    pub global_threshold: bool,
    pub join_slack: i64,
}

pub fn anomaly(out: &mut Out, bundle: &TraceBundle, opts: &AnomalyOpts) -> Result<Value> {
    let (cleaned, _) = clean_bundle(bundle, None, None)?;
    let selected: Vec<&MetricSeries> = cleaned
        .series()
        .iter()
        .filter(|s| opts.node.as_deref().is_none_or(|n| s.node_id == n))
        .filter(|s| opts.metric.as_deref().is_none_or(|m| s.metric_name == m))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Config("no series match the node/metric selector".into()));
    }

    let scored: Vec<_> = selected
        .par_iter()
        .map(|s| {
            let zs = moving_zscore(s, opts.window)?;
            let report = detect_anomalies(s, opts.window, opts.percentile)?;
            Ok((*s, zs, report))
        })
        .collect::<holistat::Result<_>>()?;

    // Optionally re-threshold against the |z| pool of every selected series.
    let scored: Vec<_> = if opts.global_threshold {
        let pool: Vec<f64> =
            scored.iter().flat_map(|(_, zs, _)| zs.iter().map(|p| p.z.abs())).collect();
        if pool.is_empty() {
            return Err(CliError::Config("no scored points to threshold".into()));
        }
        let threshold = holistat::stats::percentile(&pool, opts.percentile);
        scored
            .into_iter()
            .map(|(s, zs, mut report)| {
                report.threshold_value = threshold;
                report.flagged = zs
                    .iter()
                    .filter(|p| p.z.is_infinite() || p.z.abs() > threshold)
                    .map(|p| p.timestamp)
                    .collect();
                (s, zs, report)
            })
            .collect()
    } else {
        scored
    };

    let mut rows = Vec::new();
    for (s, zs, report) in &scored {
        let z_at: BTreeMap<i64, f64> = zs.iter().map(|p| (p.timestamp, p.z)).collect();
        for t in &report.flagged {
            rows.push(vec![
                s.node_id.clone(),
                s.metric_name.clone(),
                t.to_string(),
                fmt(z_at[t]),
                fmt(report.threshold_value),
            ]);
        }
    }
    out.write_csv(
        "anomalies.csv",
        &["node", "metric", "timestamp", "z", "threshold"],
        &rows,
        "flagged observations across the selected series",
    )?;

    let summary_rows: Vec<Value> = scored
        .iter()
        .map(|(s, _, report)| {
            json!({
                "node": s.node_id,
                "metric": s.metric_name,
                "threshold_value": report.threshold_value,
                "flagged": report.flagged.len(),
                "total_points": report.total_points,
            })
        })
        .collect();
    let summary = json!({
        "window": opts.window,
        "percentile": opts.percentile,
        "global_threshold": opts.global_threshold,
        "series": summary_rows,
    });
    out.write_json("anomaly_report.json", &summary, "per-series anomaly accounting")?;

    if !cleaned.jobs().is_empty() {
        let mut join_rows = Vec::new();
        for (s, _, report) in &scored {
            for (t, job_ids) in join_anomalies_jobs(&report.flagged, cleaned.jobs(), opts.join_slack)? {
                if !job_ids.is_empty() {
                    join_rows.push(vec![
                        s.node_id.clone(),
                        s.metric_name.clone(),
                        t.to_string(),
                        job_ids.join(";"),
                    ]);
                }
            }
        }
        out.write_csv(
            "anomaly_jobs.csv",
            &["node", "metric", "timestamp", "job_ids"],
            &join_rows,
            "unsuccessful jobs overlapping each flagged timestamp",
        )?;
    }

    // Figure: the densest-flagging series, spikes merged into the sample.
    let focus = scored
        .iter()
        .max_by(|a, b| {
            a.2.flagged.len().cmp(&b.2.flagged.len()).then_with(|| b.0.key().cmp(&a.0.key()))
        })
        .expect("non-empty selection");
    let (s, zs, report) = focus;
    let flagged: BTreeSet<i64> = report.flagged.iter().copied().collect();
    let stride = zs.len().div_ceil(2_000).max(1);
    let plotted: Vec<&holistat::anomaly::ZScorePoint> = zs
        .iter()
        .enumerate()
        .filter(|(i, p)| i % stride == 0 || flagged.contains(&p.timestamp))
        .map(|(_, p)| p)
        .collect();
    let fig_rows: Vec<Vec<String>> = plotted
        .iter()
        .map(|p| vec![p.timestamp.to_string(), fmt(p.z), fmt(report.threshold_value)])
        .collect();
    out.write_csv(
        "fig_anomaly.csv",
        &["timestamp", "z", "threshold"],
        &fig_rows,
        "figure twin: plotted z-scores",
    )?;
    let line: Vec<(f64, f64)> = plotted
        .iter()
        .map(|p| (p.timestamp as f64, if p.z.is_finite() { p.z } else { 0.0 }))
        .collect();
    let fig = svg::line_chart(
        &format!("Moving z-scores: {}/{}", s.node_id, s.metric_name),
        "timestamp",
        "z",
        &[("z".to_string(), line)],
        &[
            (report.threshold_value, format!("p{} |z|", opts.percentile)),
            (-report.threshold_value, String::new()),
        ],
    );
    out.write_bytes("fig_anomaly.svg", fig.as_bytes(), "z-score trace for the busiest series")?;

    Ok(json!({
        "series_scored": scored.len(),
        "total_flagged": rows.len(),
        "artifacts": out.artifact_names(),
    }))
}

// ---------------------------------------------------------------------------
// characterize

pub struct CharacterizeOpts {
    pub pivot: Option<i64>,
    pub heatmap_metric: String,
}

fn class_index(class: IntensityClass) -> u8 {
    match class {
        IntensityClass::VeryLow => 0,
        IntensityClass::Low => 1,
        IntensityClass::Moderate => 2,
        IntensityClass::High => 3,
        IntensityClass::VeryHigh => 4,
    }
}

/// Evenly strided subset of `items` capped at `cap` points, always keeping
/// the final element so curves end where the data ends.
fn strided<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.is_empty() {
        return Vec::new();
    }
    let stride = items.len().div_ceil(cap).max(1);
    let mut picked: Vec<T> =
        items.iter().step_by(stride).cloned().collect();
    if (items.len() - 1) % stride != 0 {
        picked.push(items[items.len() - 1].clone());
    }
    picked
}

pub fn characterize(out: &mut Out, bundle: &TraceBundle, opts: &CharacterizeOpts) -> Result<Value> {
    let (cleaned, clean_report) = clean_bundle(bundle, None, None)?;
    let mut summary = serde_json::Map::new();
    summary.insert("clean_report".into(), serde_json::to_value(&clean_report).expect("serializable"));

    if !cleaned.jobs().is_empty() {
        characterize_jobs(out, &cleaned, opts, &mut summary)?;
    }
    if !cleaned.series().is_empty() {
        characterize_metrics(out, &cleaned, opts, &mut summary)?;
    }
    out.write_json("summary.json", &summary, "headline statistics and section notes")?;
    let mut result = summary;
    result.insert("artifacts".into(), json!(out.artifact_names()));
    Ok(Value::Object(result))
}

fn characterize_jobs(
    out: &mut Out,
    cleaned: &TraceBundle,
    opts: &CharacterizeOpts,
    summary: &mut serde_json::Map<String, Value>,
) -> Result<()> {
    let jobs = cleaned.jobs();

    let states = state_fractions(jobs)?;
    let state_rows: Vec<Vec<String>> =
        states.iter().map(|(s, f)| vec![s.as_str().to_string(), fmt(*f)]).collect();
    out.write_csv("state_fractions.csv", &["state", "fraction"], &state_rows, "job-state mix")?;
    let bars: Vec<(String, f64)> =
        states.iter().map(|(s, f)| (s.as_str().to_string(), *f)).collect();
    out.write_bytes(
        "fig_states.svg",
        svg::bar_chart("Job state fractions", "state", "fraction", &bars, None).as_bytes(),
        "job-state mix",
    )?;
    summary.insert(
        "state_fractions".into(),
        Value::Object(
            states.iter().map(|(s, f)| (s.as_str().to_string(), json!(f))).collect(),
        ),
    );

    let durations = duration_stats(jobs, &[])?;
    let ecdf_rows: Vec<Vec<String>> = durations
        .ecdf
        .values
        .iter()
        .zip(&durations.ecdf.fractions)
        .map(|(v, f)| vec![fmt(*v), fmt(*f)])
        .collect();
    out.write_csv(
        "runtime_ecdf.csv",
        &["runtime_seconds", "fraction"],
        &ecdf_rows,
        "runtime ECDF over all terminal states",
    )?;
    let fig_points = strided(&ecdf_rows, 400);
    out.write_csv(
        "fig_runtime_ecdf.csv",
        &["runtime_seconds", "fraction"],
        &fig_points,
        "figure twin: plotted ECDF points",
    )?;
    let curve: Vec<(f64, f64)> = fig_points
        .iter()
        .map(|row| (row[0].parse().expect("formatted"), row[1].parse().expect("formatted")))
        .collect();
    out.write_bytes(
        "fig_runtime_ecdf.svg",
        svg::line_chart(
            "Job runtime ECDF",
            "runtime (s)",
            "fraction",
            &[("all jobs".to_string(), curve)],
            &[],
        )
        .as_bytes(),
        "runtime ECDF",
    )?;
    summary.insert("jobs".into(), json!(jobs.len()));
    summary.insert("fraction_below_300s".into(), json!(durations.fraction_below(300)));

    let (hist, mode) = core_histogram(jobs)?;
    let core_rows: Vec<Vec<String>> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![fmt(hist.bin_edges[i]), c.to_string()])
        .collect();
    out.write_csv("core_histogram.csv", &["cores", "jobs"], &core_rows, "requested-core histogram")?;
    let bars: Vec<(String, f64)> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| (fmt(hist.bin_edges[i]), *c as f64))
        .collect();
    out.write_bytes(
        "fig_core_histogram.svg",
        svg::bar_chart("Requested cores", "cores", "jobs", &bars, None).as_bytes(),
        "requested-core histogram",
    )?;
    summary.insert("core_mode".into(), json!(mode));

    for (group, rel, desc) in [
        (ArrivalGroup::HourOfDay, "arrivals_hour.csv", "mean arrivals per hour of day"),
        (ArrivalGroup::DayOfWeek, "arrivals_weekday.csv", "mean arrivals per weekday"),
        (ArrivalGroup::CalendarDay, "arrivals_day.csv", "arrivals per calendar day"),
    ] {
        let grouped = arrivals_grouped(jobs, group);
        let rows: Vec<Vec<String>> =
            grouped.iter().map(|(label, v)| vec![label.clone(), fmt(*v)]).collect();
        out.write_csv(rel, &["group", "jobs"], &rows, desc)?;
        if group == ArrivalGroup::HourOfDay {
            let bars: Vec<(String, f64)> = grouped.clone();
            out.write_bytes(
                "fig_arrivals_hour.svg",
                svg::bar_chart("Arrivals by hour of day", "hour", "mean jobs", &bars, None)
                    .as_bytes(),
                "diurnal arrival profile",
            )?;
        }
    }

    let cov = cov_per_user(jobs);
    let cov_rows: Vec<Vec<String>> = cov
        .iter()
        .map(|u| {
            vec![u.user_id.clone(), fmt(u.cov), u.jobs.to_string(), u.singleton.to_string()]
        })
        .collect();
    out.write_csv(
        "user_cov.csv",
        &["user_id", "cov_cores", "jobs", "singleton"],
        &cov_rows,
        "per-user spread of core requests",
    )?;

    let bins = runtime_by_length_and_state(jobs, &RUNTIME_EDGES)?;
    let bin_label = |b: &holistat::characterization::RuntimeBin| match b.hi {
        Some(hi) => format!("{}-{}", b.lo, hi),
        None => format!(">={}", b.lo),
    };
    let mut bin_rows = Vec::new();
    let mut states_present = BTreeSet::new();
    for b in &bins {
        for (state, seconds) in &b.by_state {
            states_present.insert(*state);
            bin_rows.push(vec![
                b.lo.to_string(),
                b.hi.map(|h| h.to_string()).unwrap_or_default(),
                state.as_str().to_string(),
                seconds.to_string(),
            ]);
        }
    }
    out.write_csv(
        "runtime_by_length_state.csv",
        &["bin_lo_seconds", "bin_hi_seconds", "state", "runtime_seconds"],
        &bin_rows,
        "runtime mass by length bin and terminal state",
    )?;
    let categories: Vec<String> = bins.iter().map(bin_label).collect();
    let layers: Vec<(String, Vec<f64>)> = states_present
        .iter()
        .map(|state| {
            (
                state.as_str().to_string(),
                bins.iter()
                    .map(|b| b.by_state.get(state).copied().unwrap_or(0) as f64)
                    .collect(),
            )
        })
        .collect();
    out.write_bytes(
        "fig_runtime_by_length_state.svg",
        svg::stacked_bars(
            "Runtime mass by job length and state",
            "runtime bin (s)",
            "runtime (s)",
            &categories,
            &layers,
        )
        .as_bytes(),
        "runtime mass by length bin and state",
    )?;

    let hours = cpu_hours_per_day(jobs);
    let hour_rows: Vec<Vec<String>> =
        hours.iter().map(|(d, h)| vec![d.to_string(), fmt(*h)]).collect();
    out.write_csv("cpu_hours.csv", &["day", "cpu_hours"], &hour_rows, "daily core-hours")?;
    let bars: Vec<(String, f64)> = hours.iter().map(|(d, h)| (d.to_string(), *h)).collect();
    out.write_bytes(
        "fig_cpu_hours.svg",
        svg::bar_chart("CPU hours per day", "day", "core-hours", &bars, None).as_bytes(),
        "daily core-hours",
    )?;

    if let Some(pivot) = opts.pivot {
        let jobs_split = split_jobs(jobs, pivot);
        summary.insert(
            "jobs_split".into(),
            json!({
                "pivot": pivot,
                "before": jobs_split.before.len(),
                "after": jobs_split.after.len(),
                "pivot_outside_span": jobs_split.pivot_outside_span,
            }),
        );
    }
    Ok(())
}

fn characterize_metrics(
    out: &mut Out,
    cleaned: &TraceBundle,
    opts: &CharacterizeOpts,
    summary: &mut serde_json::Map<String, Value>,
) -> Result<()> {
    // Cluster-wide utilization needs a uniform grid and full inventory
    // coverage; on telemetry that cannot support it, record why instead.
    let load_series: Vec<MetricSeries> =
        cleaned.series_for_metric("load1").into_iter().cloned().collect();
    if load_series.is_empty() {
        summary.insert("utilization_skipped".into(), json!("no load1 series"));
    } else {
        match cluster_load_utilization(&load_series, cleaned.inventory()) {
            Ok(utilization) => {
                let rows: Vec<Vec<String>> = utilization
                    .samples
                    .iter()
                    .map(|s| vec![s.timestamp.to_string(), io::fmt_opt(s.value)])
                    .collect();
                out.write_csv(
                    "utilization.csv",
                    &["timestamp", "utilization"],
                    &rows,
                    "cluster load over available cores",
                )?;
                let present: Vec<(f64, f64)> = utilization
                    .samples
                    .iter()
                    .filter_map(|s| s.value.map(|v| (s.timestamp as f64, v)))
                    .collect();
                let plotted = strided(&present, 600);
                let fig_rows: Vec<Vec<String>> =
                    plotted.iter().map(|(t, v)| vec![fmt(*t), fmt(*v)]).collect();
                out.write_csv(
                    "fig_utilization.csv",
                    &["timestamp", "utilization"],
                    &fig_rows,
                    "figure twin: plotted utilization points",
                )?;
                out.write_bytes(
                    "fig_utilization.svg",
                    svg::line_chart(
                        "Cluster utilization",
                        "timestamp",
                        "utilization",
                        &[("utilization".to_string(), plotted)],
                        &[],
                    )
                    .as_bytes(),
                    "cluster utilization",
                )?;
                summary.insert("utilization_points".into(), json!(utilization.len()));
            }
            Err(e) => {
                summary.insert("utilization_skipped".into(), json!(e.to_string()));
            }
        }
    }

    heatmap(out, cleaned, &opts.heatmap_metric, summary)?;

    if !cleaned.inventory().is_empty() {
        rack_stats(out, cleaned, summary)?;
        if let Some(pivot) = opts.pivot {
            let rows = period_compare(cleaned, pivot, &cleaned.metric_names())
                .map_err(CliError::from)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let side = |s: &Option<holistat::characterization::SideStats>| match s {
                        Some(s) => (fmt(s.mean), fmt(s.std), s.n.to_string()),
                        None => (String::new(), String::new(), String::new()),
                    };
                    let (bm, bs, bn) = side(&r.before);
                    let (am, as_, an) = side(&r.after);
                    vec![
                        r.metric.clone(),
                        r.rack_id.clone(),
                        bm,
                        bs,
                        bn,
                        am,
                        as_,
                        an,
                        r.delta_mean.map(fmt).unwrap_or_default(),
                    ]
                })
                .collect();
            out.write_csv(
                "period_compare.csv",
                &[
                    "metric",
                    "rack",
                    "before_mean",
                    "before_std",
                    "before_n",
                    "after_mean",
                    "after_std",
                    "after_n",
                    "delta_mean",
                ],
                &csv_rows,
                "per-rack mean shift across the pivot",
            )?;
            summary.insert("period_compare_rows".into(), json!(rows.len()));
        }
    }
    Ok(())
}

fn heatmap(
    out: &mut Out,
    cleaned: &TraceBundle,
    metric: &str,
    summary: &mut serde_json::Map<String, Value>,
) -> Result<()> {
    let targets = cleaned.series_for_metric(metric);
    if targets.is_empty() {
        summary.insert("heatmap_skipped".into(), json!(format!("no {metric} series")));
        return Ok(());
    }
    let classified: Vec<(String, Vec<holistat::trace::HourClass>)> = targets
        .par_iter()
        .map(|s| {
            let values: Vec<f64> = s.present_values().collect();
            let normalized = normalize_p99_clip(&values)?;
            let mut idx = 0;
            let samples = s
                .samples
                .iter()
                .map(|sample| holistat::Sample {
                    timestamp: sample.timestamp,
                    value: sample.value.map(|_| {
                        let v = normalized[idx];
                        idx += 1;
                        v
                    }),
                })
                .collect();
            let rebuilt =
                MetricSeries::new(&s.node_id, &s.metric_name, s.base_interval, samples)?;
            Ok((s.node_id.clone(), hourly_max_class(&rebuilt)?))
        })
        .collect::<holistat::Result<_>>()?;

    let mut rows = Vec::new();
    for (node, classes) in &classified {
        for (hour_start, class) in classes {
            rows.push(vec![
                node.clone(),
                hour_start.to_string(),
                class.map(|c| c.as_str().to_string()).unwrap_or_default(),
            ]);
        }
    }
    out.write_csv(
        "heatmap.csv",
        &["node", "hour_start", "class"],
        &rows,
        "hourly peak-intensity classes per node",
    )?;

    let hour_lo = classified
        .iter()
        .filter_map(|(_, c)| c.first().map(|(h, _)| *h))
        .min();
    let hour_hi = classified
        .iter()
        .filter_map(|(_, c)| c.last().map(|(h, _)| *h))
        .max();
    if let (Some(lo), Some(hi)) = (hour_lo, hour_hi) {
        let cols: Vec<i64> = (0..=(hi - lo) / 3_600).map(|i| lo + i * 3_600).collect();
        let col_labels: Vec<String> =
            cols.iter().map(|h| format!("{}h", (h - lo) / 3_600)).collect();
        let row_labels: Vec<String> = classified.iter().map(|(n, _)| n.clone()).collect();
        let cells: Vec<Vec<Option<u8>>> = classified
            .iter()
            .map(|(_, classes)| {
                let by_hour: BTreeMap<i64, Option<IntensityClass>> =
                    classes.iter().copied().collect();
                cols.iter()
                    .map(|h| by_hour.get(h).copied().flatten().map(class_index))
                    .collect()
            })
            .collect();
        out.write_bytes(
            "fig_heatmap.svg",
            svg::class_grid(
                &format!("Hourly peak intensity: {metric}"),
                &row_labels,
                &col_labels,
                &cells,
                &INTENSITY_LEGEND,
            )
            .as_bytes(),
            "node x hour intensity grid",
        )?;
    }
    summary.insert("heatmap_nodes".into(), json!(classified.len()));
    Ok(())
}

fn rack_stats(
    out: &mut Out,
    cleaned: &TraceBundle,
    summary: &mut serde_json::Map<String, Value>,
) -> Result<()> {
    let mut rows = Vec::new();
    let mut skipped_racks = BTreeSet::new();
    for metric in cleaned.metric_names() {
        let series: Vec<MetricSeries> =
            cleaned.series_for_metric(&metric).into_iter().cloned().collect();
        let per_stat = |stat| rack_aggregate(&series, cleaned.inventory(), stat);
        let (means, _) = match per_stat(RackStatistic::Mean) {
            Ok(v) => v,
            Err(e) => {
                summary.insert("rack_stats_skipped".into(), json!(e.to_string()));
                return Ok(());
            }
        };
        let (stds, _) = per_stat(RackStatistic::Std).map_err(CliError::from)?;
        let (boxes, skipped) = per_stat(RackStatistic::Boxplot).map_err(CliError::from)?;
        skipped_racks.extend(skipped);
        for ((m, s), b) in means.iter().zip(&stds).zip(&boxes) {
            let bp = b.boxplot.as_ref().expect("boxplot statistic requested");
            rows.push(vec![
                metric.clone(),
                m.rack_id.clone(),
                m.n.to_string(),
                m.mean.map(fmt).unwrap_or_default(),
                s.std.map(fmt).unwrap_or_default(),
                fmt(bp.q1),
                fmt(bp.median),
                fmt(bp.q3),
                fmt(bp.whisker_low),
                fmt(bp.whisker_high),
                bp.outliers.len().to_string(),
            ]);
        }
    }
    out.write_csv(
        "rack_stats.csv",
        &[
            "metric",
            "rack",
            "n",
            "mean",
            "std",
            "q1",
            "median",
            "q3",
            "whisker_low",
            "whisker_high",
            "outliers",
        ],
        &rows,
        "per-rack pooled statistics per metric",
    )?;
    if !skipped_racks.is_empty() {
        summary.insert(
            "racks_missing_some_metric".into(),
            json!(skipped_racks.into_iter().collect::<Vec<_>>()),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

pub struct PredictOpts {
    pub node: Option<String>,
    pub metric: Option<String>,
    pub granularities: Vec<u32>,
    pub config: TrainConfig,
}

pub fn predict(out: &mut Out, bundle: &TraceBundle, opts: &PredictOpts) -> Result<Value> {
    // Runs on the ingest-validated series as-is: flat signals are legitimate
    // prediction targets, so the cleanup pass that drops them is skipped.
    let target = bundle
        .series()
        .iter()
        .find(|s| {
            opts.node.as_deref().is_none_or(|n| s.node_id == n)
                && opts.metric.as_deref().is_none_or(|m| s.metric_name == m)
        })
        .ok_or_else(|| CliError::Config("no series match the node/metric selector".into()))?;
    if opts.granularities.is_empty() {
        return Err(CliError::Config("empty granularity list".into()));
    }

    let runs: Vec<_> = opts
        .granularities
        .par_iter()
        .map(|&g| Ok((g, train(std::slice::from_ref(target), g, &opts.config)?)))
        .collect::<holistat::Result<_>>()?;
    let best_idx = runs
        .iter()
        .enumerate()
        .min_by(|(_, (_, a)), (_, (_, b))| {
            a.best_eval_loss.partial_cmp(&b.best_eval_loss).expect("finite losses")
        })
        .map(|(i, _)| i)
        .expect("non-empty runs");

    let rows: Vec<Vec<String>> = runs
        .iter()
        .enumerate()
        .map(|(i, (g, r))| {
            vec![
                g.to_string(),
                (INPUT_SPAN_SECONDS / g).to_string(),
                r.windows_used.to_string(),
                r.windows_dropped.to_string(),
                fmt(r.best_eval_loss),
                (i == best_idx).to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "study.csv",
        &["granularity_s", "input_steps", "windows_used", "windows_dropped", "eval_loss", "best"],
        &rows,
        "granularity study table",
    )?;

    let study_json = json!({
        "target": { "node": target.node_id, "metric": target.metric_name },
        "config": {
            "learning_rate": opts.config.learning_rate,
            "huber_delta": opts.config.huber_delta,
            "max_epochs": opts.config.max_epochs,
            "patience": opts.config.patience,
            "eval_fraction": opts.config.eval_fraction,
            "hidden_size": opts.config.hidden_size,
            "seed": opts.config.seed,
        },
        "cells": runs.iter().enumerate().map(|(i, (g, r))| json!({
            "granularity_s": g,
            "eval_loss": r.best_eval_loss,
            "windows_used": r.windows_used,
            "windows_dropped": r.windows_dropped,
            "epochs_run": r.loss_history.len(),
            "best": i == best_idx,
        })).collect::<Vec<_>>(),
    });
    out.write_json("study.json", &study_json, "granularity study with config echo")?;

    let bars: Vec<(String, f64)> =
        runs.iter().map(|(g, r)| (format!("{g}s"), r.best_eval_loss)).collect();
    out.write_bytes(
        "fig_study.svg",
        svg::bar_chart(
            &format!("Eval loss by input granularity: {}/{}", target.node_id, target.metric_name),
            "granularity",
            "Huber eval loss",
            &bars,
            None,
        )
        .as_bytes(),
        "eval loss per granularity",
    )?;

    Ok(json!({
        "target": format!("{}/{}", target.node_id, target.metric_name),
        "best_granularity_s": runs[best_idx].0,
        "cells": study_json["cells"],
        "artifacts": out.artifact_names(),
    }))
}

// ---------------------------------------------------------------------------
// storage

pub fn storage(out: &mut Out, bundle: &TraceBundle, granularities: &[u32], level: u32) -> Result<Value> {
    if level > 9 {
        return Err(CliError::Config(format!("deflate level {level} outside 0..=9")));
    }
    let codec = DeflateCodec { level };
    let report = compression_study(bundle.series(), granularities, &codec)?;

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.granularity.to_string(),
                r.sample_count.to_string(),
                r.raw_bytes.to_string(),
                r.compressed_bytes.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "storage.csv",
        &["granularity_s", "samples", "raw_bytes", "compressed_bytes"],
        &rows,
        "bytes per resampling granularity",
    )?;
    out.write_json("storage_report.json", &report, "compression study with finest/coarsest ratios")?;

    let categories: Vec<String> =
        report.rows.iter().map(|r| format!("{}s", r.granularity)).collect();
    let compressed: Vec<f64> = report.rows.iter().map(|r| r.compressed_bytes as f64).collect();
    let savings: Vec<f64> = report
        .rows
        .iter()
        .map(|r| (r.raw_bytes - r.compressed_bytes) as f64)
        .collect();
    out.write_bytes(
        "fig_storage.svg",
        svg::stacked_bars(
            "Stored bytes by granularity (deflate)",
            "granularity",
            "bytes",
            &categories,
            &[("compressed".to_string(), compressed), ("deflate savings".to_string(), savings)],
        )
        .as_bytes(),
        "raw vs compressed bytes per granularity",
    )?;

    let bytes = io::encode_hstrace(bundle.series())?;
    out.write_bytes("trace.hstrace", &bytes, "columnar encoding at base granularity")?;

    Ok(json!({
        "codec": report.codec,
        "sample_ratio": report.sample_ratio,
        "compressed_ratio": report.compressed_ratio,
        "artifacts": out.artifact_names(),
    }))
}

// ---------------------------------------------------------------------------
// synth

pub fn synth(out: &mut Out, preset: &str, seed: u64, size: Option<u64>) -> Result<Value> {
    let spec: GeneratorSpec = match preset {
        "demo" => presets::demo(seed),
        "persistence" => presets::persistence(seed),
        "workload" => presets::workload(seed, size.unwrap_or(20_000)),
        "granularity" => presets::granularity(seed),
        "storage-ar1" => presets::storage_ar1(seed, size.unwrap_or(4) as u32),
        "storage-iid" => presets::storage_iid(seed, size.unwrap_or(4) as u32),
        other => {
            return Err(CliError::Config(format!(
                "unknown preset {other:?}; expected demo, persistence, workload, granularity, \
                 storage-ar1, or storage-iid"
            )))
        }
    };
    let (bundle, truth) = gen_bundle(&spec)?;

    out.write_csv(
        "metrics.csv",
        &io::METRIC_HEADER,
        &io::metrics_rows(bundle.series()),
        "generated telemetry",
    )?;
    if !bundle.jobs().is_empty() {
        out.write_csv("jobs.csv", &io::JOB_HEADER, &io::jobs_rows(bundle.jobs()), "generated jobs")?;
    }
    if !bundle.inventory().is_empty() {
        out.write_csv(
            "inventory.csv",
            &io::INVENTORY_HEADER,
            &io::inventory_rows(bundle.inventory()),
            "generated inventory",
        )?;
    }
    out.write_json("ground_truth.json", &truth, "planted structure for recovery checks")?;

    Ok(json!({
        "preset": preset,
        "seed": seed,
        "series": bundle.series().len(),
        "jobs": bundle.jobs().len(),
        "nodes": bundle.inventory().len(),
        "artifacts": out.artifact_names(),
    }))
}

// ---------------------------------------------------------------------------
// report

pub struct ReportOpts {
    pub correlate: CorrelateOpts,
    pub anomaly: AnomalyOpts,
    pub characterize: CharacterizeOpts,
    pub predict: PredictOpts,
    pub storage_granularities: Vec<u32>,
    pub storage_level: u32,
}

pub fn report(out: &mut Out, bundle: &TraceBundle, opts: &ReportOpts) -> Result<Value> {
    let mut sections: Vec<(&str, &str, Vec<(String, String)>)> = Vec::new();
    let mut summaries = serde_json::Map::new();

    {
        let mut sub = Out::new(&out.root().join("clean"))?;
        let summary = ingest(&mut sub, bundle)?;
        summaries.insert("clean".into(), summary);
        sections.push(("clean", "Validated and normalized inputs", sub.into_artifacts()));
    }
    {
        let mut sub = Out::new(&out.root().join("correlation"))?;
        let summary = correlate(&mut sub, bundle, &opts.correlate)?;
        summaries.insert("correlation".into(), summary);
        sections.push(("correlation", "Daily all-pairs coefficients and persistence", sub.into_artifacts()));
    }
    {
        let mut sub = Out::new(&out.root().join("anomalies"))?;
        let summary = anomaly(&mut sub, bundle, &opts.anomaly)?;
        summaries.insert("anomalies".into(), summary);
        sections.push(("anomalies", "Moving z-score detection", sub.into_artifacts()));
    }
    {
        let mut sub = Out::new(&out.root().join("characterization"))?;
        let summary = characterize(&mut sub, bundle, &opts.characterize)?;
        summaries.insert("characterization".into(), summary);
        sections.push(("characterization", "Workload and telemetry statistics", sub.into_artifacts()));
    }
    {
        let mut sub = Out::new(&out.root().join("prediction"))?;
        let summary = predict(&mut sub, bundle, &opts.predict)?;
        summaries.insert("prediction".into(), summary);
        sections.push(("prediction", "LSTM granularity study", sub.into_artifacts()));
    }
    {
        let mut sub = Out::new(&out.root().join("storage"))?;
        let summary = storage(&mut sub, bundle, &opts.storage_granularities, opts.storage_level)?;
        summaries.insert("storage".into(), summary);
        sections.push(("storage", "Columnar encoding and compression", sub.into_artifacts()));
    }

    let mut index = String::from("# holistat report\n");
    for (name, blurb, artifacts) in &sections {
        index.push_str(&format!("\n## {name}\n\n{blurb}.\n\n"));
        for (rel, desc) in artifacts {
            index.push_str(&format!("- [{name}/{rel}]({name}/{rel}) — {desc}\n"));
        }
    }
    out.write_bytes("index.md", index.as_bytes(), "artifact index")?;

    summaries.insert(
        "artifacts".into(),
        json!(sections
            .iter()
            .flat_map(|(name, _, artifacts)| artifacts
                .iter()
                .map(move |(rel, _)| format!("{name}/{rel}")))
            .chain(["index.md".to_string()])
            .collect::<Vec<_>>()),
    );
    Ok(Value::Object(summaries))
}
