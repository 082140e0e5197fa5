use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use holistat::storage::{decode_columnar, encode_columnar};
use holistat::{JobRecord, JobState, MetricSeries, NodeInfo, Sample};

use crate::error::{CliError, Result};

pub const METRIC_HEADER: [&str; 4] = ["timestamp", "node", "metric", "value"];
pub const JOB_HEADER: [&str; 9] =
    ["job_id", "user_id", "submit", "start", "end", "cores", "state", "is_ml", "nodes"];
pub const INVENTORY_HEADER: [&str; 4] = ["node", "rack", "cores", "is_ml"];

/// Grid spacing assumed for a series that has too few rows to reveal one.
const FALLBACK_INTERVAL: u32 = 15;

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let meta = std::fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.len() == 0 {
        return Err(CliError::parse(path, Some(1), None, "empty file"));
    }
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    CliError::parse(path, line, None, e.to_string())
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(CliError::parse(
            path,
            Some(1),
            None,
            format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

struct Row {
    record: csv::StringRecord,
    line: u64,
}

impl Row {
    fn field(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, path: &Path, idx: usize, what: &str) -> Result<T> {
        self.field(idx).parse().map_err(|_| {
            CliError::parse(
                path,
                Some(self.line),
                Some(idx as u64 + 1),
                format!("invalid {what} {:?}", self.field(idx)),
            )
        })
    }

    fn nonempty(&self, path: &Path, idx: usize, what: &str) -> Result<String> {
        let v = self.field(idx);
        if v.is_empty() {
            return Err(CliError::parse(
                path,
                Some(self.line),
                Some(idx as u64 + 1),
                format!("empty {what}"),
            ));
        }
        Ok(v.to_string())
    }
}

fn rows<'r>(
    path: &Path,
    rdr: &'r mut csv::Reader<std::fs::File>,
) -> impl Iterator<Item = Result<Row>> + 'r {
    let path = path.to_path_buf();
    rdr.records().map(move |rec| match rec {
        Ok(record) => {
            let line = record.position().map_or(0, |p| p.line());
            Ok(Row { record, line })
        }
        Err(e) => Err(csv_error(&path, e)),
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

type SeriesAccumulator = BTreeMap<(String, String), BTreeMap<i64, Option<f64>>>;

/// Parses one metrics CSV into the shared accumulator. Duplicate
/// (node, metric, timestamp) rows are rejected at the offending line.
fn read_metrics_into(path: &Path, acc: &mut SeriesAccumulator) -> Result<()> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &METRIC_HEADER)?;
    for row in rows(path, &mut rdr) {
        let row = row?;
        let timestamp: i64 = row.parse(path, 0, "timestamp")?;
        let node = row.nonempty(path, 1, "node")?;
        let metric = row.nonempty(path, 2, "metric")?;
        let value = match row.field(3) {
            "" => None,
            text => {
                let v: f64 = row.parse(path, 3, "value")?;
                if !v.is_finite() {
                    return Err(CliError::parse(
                        path,
                        Some(row.line),
                        Some(4),
                        format!("non-finite value {text:?}"),
                    ));
                }
                Some(v)
            }
        };
        let key = (node, metric);
        let series = acc.entry(key.clone()).or_default();
        if series.insert(timestamp, value).is_some() {
            return Err(CliError::parse(
                path,
                Some(row.line),
                Some(1),
                format!("duplicate timestamp {timestamp} for series {}/{}", key.0, key.1),
            ));
        }
    }
    Ok(())
}

fn finalize_series(path: &Path, acc: SeriesAccumulator) -> Result<Vec<MetricSeries>> {
    let mut out = Vec::with_capacity(acc.len());
    for ((node, metric), samples) in acc {
        let timestamps: Vec<i64> = samples.keys().copied().collect();
        let mut base = 0u64;
        for pair in timestamps.windows(2) {
            base = gcd(base, (pair[1] - pair[0]) as u64);
        }
        let base = u32::try_from(base).ok().filter(|&b| b > 0).unwrap_or(FALLBACK_INTERVAL);
        let samples = samples
            .into_iter()
            .map(|(timestamp, value)| Sample { timestamp, value })
            .collect();
        let series = MetricSeries::new(&node, &metric, base, samples)
            .map_err(|e| CliError::parse(path, None, None, e.to_string()))?;
        out.push(series);
    }
    Ok(out)
}

/// Loads metric series from one or more CSV files (merged on series key)
/// or from a single columnar `.hstrace` file. The grid spacing of each CSV
/// series is inferred as the GCD of its timestamp deltas.
pub fn load_series(metrics: &[std::path::PathBuf], hstrace: Option<&Path>) -> Result<Vec<MetricSeries>> {
    if let Some(path) = hstrace {
        return read_hstrace(path);
    }
    let mut acc = SeriesAccumulator::new();
    for path in metrics {
        read_metrics_into(path, &mut acc)?;
    }
    let context = metrics.first().map(|p| p.as_path()).unwrap_or_else(|| Path::new("<none>"));
    finalize_series(context, acc)
}

pub fn read_jobs(path: &Path) -> Result<Vec<JobRecord>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &JOB_HEADER)?;
    let mut jobs = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rows(path, &mut rdr) {
        let row = row?;
        let job_id = row.nonempty(path, 0, "job_id")?;
        if !seen.insert(job_id.clone()) {
            return Err(CliError::parse(
                path,
                Some(row.line),
                Some(1),
                format!("duplicate job_id {job_id:?}"),
            ));
        }
        let user_id = row.nonempty(path, 1, "user_id")?;
        let submit: i64 = row.parse(path, 2, "submit time")?;
        let start: i64 = row.parse(path, 3, "start time")?;
        let end: i64 = row.parse(path, 4, "end time")?;
        let cores: u32 = row.parse(path, 5, "core count")?;
        let state: JobState = row.field(6).parse().map_err(|_| {
            CliError::parse(
                path,
                Some(row.line),
                Some(7),
                format!("unknown job state {:?}", row.field(6)),
            )
        })?;
        let is_ml = parse_bool(path, &row, 7)?;
        let nodes: Vec<String> =
            row.field(8).split(';').filter(|s| !s.is_empty()).map(str::to_string).collect();
        let job = JobRecord::new(job_id, user_id, submit, start, end, cores, state, is_ml, nodes)
            .map_err(|e| CliError::parse(path, Some(row.line), None, e.to_string()))?;
        jobs.push(job);
    }
    Ok(jobs)
}

fn parse_bool(path: &Path, row: &Row, idx: usize) -> Result<bool> {
    match row.field(idx) {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CliError::parse(
            path,
            Some(row.line),
            Some(idx as u64 + 1),
            format!("expected true or false, found {other:?}"),
        )),
    }
}

pub fn read_inventory(path: &Path) -> Result<BTreeMap<String, NodeInfo>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &INVENTORY_HEADER)?;
    let mut inventory = BTreeMap::new();
    for row in rows(path, &mut rdr) {
        let row = row?;
        let node = row.nonempty(path, 0, "node")?;
        let rack_id = row.nonempty(path, 1, "rack")?;
        let core_count: u32 = row.parse(path, 2, "core count")?;
        if core_count == 0 {
            return Err(CliError::parse(path, Some(row.line), Some(3), "core count must be >= 1"));
        }
        let is_ml_node = parse_bool(path, &row, 3)?;
        if inventory
            .insert(node.clone(), NodeInfo { rack_id, core_count, is_ml_node })
            .is_some()
        {
            return Err(CliError::parse(
                path,
                Some(row.line),
                Some(1),
                format!("duplicate node {node:?}"),
            ));
        }
    }
    Ok(inventory)
}

pub fn read_hstrace(path: &Path) -> Result<Vec<MetricSeries>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_columnar(&bytes).map_err(|e| CliError::parse(path, None, None, e.to_string()))
}

/// Renders a CSV in memory: fixed header, LF rows, RFC-4180 quoting.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to Vec cannot fail");
    for row in rows {
        w.write_record(row).expect("write to Vec cannot fail");
    }
    w.into_inner().expect("no partial flush on Vec")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_rows(series: &[MetricSeries]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in series {
        for sample in &s.samples {
            rows.push(vec![
                sample.timestamp.to_string(),
                s.node_id.clone(),
                s.metric_name.clone(),
                fmt_opt(sample.value),
            ]);
        }
    }
    rows
}

pub fn jobs_rows(jobs: &[JobRecord]) -> Vec<Vec<String>> {
    jobs.iter()
        .map(|j| {
            vec![
                j.job_id.clone(),
                j.user_id.clone(),
                j.submit_time.to_string(),
                j.start_time.to_string(),
                j.end_time.to_string(),
                j.cores_requested.to_string(),
                j.state.as_str().to_string(),
                j.is_ml.to_string(),
                j.nodes.join(";"),
            ]
        })
        .collect()
}

pub fn inventory_rows(inventory: &BTreeMap<String, NodeInfo>) -> Vec<Vec<String>> {
    inventory
        .iter()
        .map(|(node, info)| {
            vec![
                node.clone(),
                info.rack_id.clone(),
                info.core_count.to_string(),
                info.is_ml_node.to_string(),
            ]
        })
        .collect()
}

pub fn encode_hstrace(series: &[MetricSeries]) -> Result<Vec<u8>> {
    encode_columnar(series).map_err(CliError::from)
}
