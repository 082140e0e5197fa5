//! Deterministic synthetic trace generator. Every random draw flows from a
//! single seed through per-series sub-seeds, so output is identical across
//! runs and worker counts. Planted structure (coupled series pairs, injected
//! spikes, job mixtures) is emitted as a ground-truth sidecar rather than
//! re-inferred from the data.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::trace::{JobRecord, JobState, MetricSeries, NodeInfo, Sample, SeriesKey, TraceBundle};

/// 64-bit FNV-1a over the seed and a list of labels; gives every series,
/// coupling, and job stream its own reproducible sub-seed independent of
/// generation order.
fn sub_seed(seed: u64, labels: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in seed.to_le_bytes() {
        hash = (hash ^ u64::from(byte)).wrapping_mul(PRIME);
    }
    for label in labels {
        for byte in label.as_bytes() {
            hash = (hash ^ u64::from(*byte)).wrapping_mul(PRIME);
        }
        hash = (hash ^ 0xff).wrapping_mul(PRIME);
    }
    hash
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RackSpec {
    pub rack_id: String,
    pub nodes: u32,
    pub cores_per_node: u32,
    pub is_ml: bool,
}

/// Value model for one generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricModel {
    Constant {
        value: f64,
    },
    LinearRamp {
        start: f64,
        end: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period_seconds: u32,
        noise_std: f64,
    },
    /// Mean-reverting AR(1) walk, optionally carrying a superimposed
    /// sinusoid (for sub-sampling-structure studies) and optionally
    /// quantized to a step grid (telemetry-like repeating values).
    Ar1 {
        mean: f64,
        phi: f64,
        noise_std: f64,
        #[serde(default)]
        quantize: Option<f64>,
        #[serde(default)]
        sin_amplitude: f64,
        #[serde(default)]
        sin_period_seconds: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub node: String,
    pub metric: String,
    pub model: MetricModel,
}

/// Replaces the target series on `active_days` with
/// `mean + scale * (c * standardized(source) + sqrt(1-c^2) * noise)`,
/// standardizing the source per UTC day. A coefficient of 1 makes the
/// target a strictly increasing transform of the source within each day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub source: SeriesKey,
    pub target: SeriesKey,
    pub coefficient: f64,
    pub mean: f64,
    pub scale: f64,
    /// `None` couples every day.
    pub active_days: Option<BTreeSet<NaiveDate>>,
}

/// A spike added on top of one generated sample, sized in units of the
/// series' own (pre-injection) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub node: String,
    pub metric: String,
    pub timestamp: i64,
    pub magnitude_sigma: f64,
}

/// Job-stream mixtures; all fractions are generation targets recorded in
/// the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMixtures {
    /// Expected submissions per hour of day (Poisson counts).
    pub arrival_rates_per_hour: [f64; 24],
    /// Fraction of jobs with runtime in `short_range` (inclusive).
    pub short_fraction: f64,
    pub short_range: (u32, u32),
    /// Long runtimes are log-uniform over this range (exclusive low end).
    pub long_range: (u32, u32),
    pub core_mix: Vec<(u32, f64)>,
    pub state_mix: Vec<(JobState, f64)>,
    pub user_count: u32,
    /// Queue delay drawn uniformly from `[0, queue_delay_max]` seconds.
    pub queue_delay_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Generation span `[t0, t1)` in epoch seconds.
    pub span: (i64, i64),
    pub base_interval: u32,
    pub racks: Vec<RackSpec>,
    pub series: Vec<SeriesSpec>,
    pub couplings: Vec<Coupling>,
    pub injections: Vec<Injection>,
    pub jobs: Option<JobMixtures>,
}

/// One planted pair as recorded in the ground truth, keys in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub pair: (SeriesKey, SeriesKey),
    pub coefficient: f64,
    /// `None` means coupled on every generated day.
    pub active_days: Option<Vec<NaiveDate>>,
}

/// Sidecar record of everything the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub planted_pairs: Vec<PlantedPair>,
    pub injections: Vec<Injection>,
    pub short_fraction: Option<f64>,
    pub state_mix: Option<Vec<(JobState, f64)>>,
    pub core_mode: Option<u32>,
    pub arrival_rates_per_hour: Option<[f64; 24]>,
}

fn validate(spec: &GeneratorSpec) -> Result<()> {
    let fail = |msg: String| Err(Error::InfeasibleSpec(msg));
    if spec.span.0 >= spec.span.1 {
        return fail(format!("span [{}, {}) is empty", spec.span.0, spec.span.1));
    }
    if spec.base_interval == 0 {
        return fail("base_interval must be positive".into());
    }
    for rack in &spec.racks {
        if rack.nodes == 0 || rack.cores_per_node == 0 {
            return fail(format!("rack {} must have nodes and cores", rack.rack_id));
        }
    }
    for s in &spec.series {
        match &s.model {
            MetricModel::Sinusoid { period_seconds, noise_std, .. } => {
                if *period_seconds == 0 {
                    return fail(format!("{}/{}: zero sinusoid period", s.node, s.metric));
                }
                if *noise_std < 0.0 {
                    return fail(format!("{}/{}: negative noise", s.node, s.metric));
                }
            }
            MetricModel::Ar1 { phi, noise_std, quantize, sin_amplitude, sin_period_seconds, .. } => {
                if !(-1.0..1.0).contains(phi) {
                    return fail(format!("{}/{}: phi {phi} outside (-1, 1)", s.node, s.metric));
                }
                if *noise_std < 0.0 {
                    return fail(format!("{}/{}: negative noise", s.node, s.metric));
                }
                if quantize.is_some_and(|q| q <= 0.0) {
                    return fail(format!("{}/{}: non-positive quantize step", s.node, s.metric));
                }
                if *sin_amplitude != 0.0 && *sin_period_seconds == 0 {
                    return fail(format!("{}/{}: zero sinusoid period", s.node, s.metric));
                }
            }
            MetricModel::Constant { .. } | MetricModel::LinearRamp { .. } => {}
        }
    }
    let keys: BTreeSet<SeriesKey> =
        spec.series.iter().map(|s| SeriesKey::new(s.node.clone(), s.metric.clone())).collect();
    if keys.len() != spec.series.len() {
        return fail("duplicate series spec".into());
    }
    let sources: BTreeSet<&SeriesKey> = spec.couplings.iter().map(|c| &c.source).collect();
    let mut targets = BTreeSet::new();
    for c in &spec.couplings {
        if !keys.contains(&c.source) {
            return fail(format!("coupling source {} has no series spec", c.source));
        }
        if !keys.contains(&c.target) {
            return fail(format!("coupling target {} has no series spec", c.target));
        }
        if c.source == c.target {
            return fail(format!("coupling of {} onto itself", c.source));
        }
        if !(-1.0..=1.0).contains(&c.coefficient) {
            return fail(format!("coupling coefficient {} outside [-1, 1]", c.coefficient));
        }
        if c.scale <= 0.0 {
            return fail("coupling scale must be positive".into());
        }
        if !targets.insert(&c.target) {
            return fail(format!("{} is the target of two couplings", c.target));
        }
        if sources.contains(&c.target) {
            return fail(format!("{} is both a coupling source and target", c.target));
        }
        if c.active_days.as_ref().is_some_and(|d| d.is_empty()) {
            return fail(format!("coupling onto {} active on zero days", c.target));
        }
    }
    if let Some(jobs) = &spec.jobs {
        if jobs.arrival_rates_per_hour.iter().any(|r| *r < 0.0 || !r.is_finite()) {
            return fail("negative arrival rate".into());
        }
        if !(0.0..=1.0).contains(&jobs.short_fraction) {
            return fail(format!("short_fraction {} outside [0, 1]", jobs.short_fraction));
        }
        if jobs.short_range.0 > jobs.short_range.1 || jobs.short_range.0 == 0 {
            return fail("bad short-runtime range".into());
        }
        if jobs.long_range.0 < jobs.short_range.1 || jobs.long_range.0 >= jobs.long_range.1 {
            return fail("bad long-runtime range".into());
        }
        let check_mix = |sum: f64, what: &str| -> Result<()> {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InfeasibleSpec(format!("{what} weights sum to {sum}, not 1")));
            }
            Ok(())
        };
        if jobs.core_mix.is_empty() || jobs.core_mix.iter().any(|(c, w)| *c == 0 || *w < 0.0) {
            return fail("bad core mixture".into());
        }
        check_mix(jobs.core_mix.iter().map(|(_, w)| w).sum(), "core mixture")?;
        if jobs.state_mix.is_empty() || jobs.state_mix.iter().any(|(_, w)| *w < 0.0) {
            return fail("bad state mixture".into());
        }
        check_mix(jobs.state_mix.iter().map(|(_, w)| w).sum(), "state mixture")?;
        if jobs.user_count == 0 {
            return fail("user_count must be positive".into());
        }
    }
    Ok(())
}

/// Canonical generated node name; presets rely on this to line series specs
/// up with the rack-derived inventory.
pub fn node_name(rack_id: &str, idx: u32) -> String {
    format!("{rack_id}-{idx:02}")
}

fn build_inventory(racks: &[RackSpec]) -> BTreeMap<String, NodeInfo> {
    let mut inventory = BTreeMap::new();
    for rack in racks {
        for i in 0..rack.nodes {
            inventory.insert(
                node_name(&rack.rack_id, i),
                NodeInfo {
                    rack_id: rack.rack_id.clone(),
                    core_count: rack.cores_per_node,
                    is_ml_node: rack.is_ml,
                },
            );
        }
    }
    inventory
}

fn gen_series_values(spec: &GeneratorSpec, s: &SeriesSpec, timestamps: &[i64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &["series", &s.node, &s.metric]));
    let span = (spec.span.1 - spec.span.0).max(1) as f64;
    match &s.model {
        MetricModel::Constant { value } => vec![*value; timestamps.len()],
        MetricModel::LinearRamp { start, end } => timestamps
            .iter()
            .map(|t| start + (end - start) * ((t - spec.span.0) as f64 / span))
            .collect(),
        MetricModel::Sinusoid { mean, amplitude, period_seconds, noise_std } => {
            let normal = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
            timestamps
                .iter()
                .map(|t| {
                    let phase =
                        2.0 * std::f64::consts::PI * (*t as f64) / f64::from(*period_seconds);
                    let noise = if *noise_std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    mean + amplitude * phase.sin() + noise
                })
                .collect()
        }
        MetricModel::Ar1 { mean, phi, noise_std, quantize, sin_amplitude, sin_period_seconds } => {
            let normal = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
            let mut state = 0.0;
            timestamps
                .iter()
                .map(|t| {
                    let noise = if *noise_std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    state = phi * state + noise;
                    let wave = if *sin_amplitude != 0.0 {
                        let phase = 2.0 * std::f64::consts::PI * (*t as f64)
                            / f64::from(*sin_period_seconds);
                        sin_amplitude * phase.sin()
                    } else {
                        0.0
                    };
                    let v = mean + state + wave;
                    match quantize {
                        Some(q) => (v / q).round() * q,
                        None => v,
                    }
                })
                .collect()
        }
    }
}

/// Day-by-day index ranges of a timestamp grid (UTC days).
fn day_ranges(timestamps: &[i64]) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < timestamps.len() {
        let day = timestamps[start].div_euclid(86_400);
        let mut end = start;
        while end < timestamps.len() && timestamps[end].div_euclid(86_400) == day {
            end += 1;
        }
        ranges.push((start, end));
        start = end;
    }
    ranges
}

fn apply_coupling(
    spec: &GeneratorSpec,
    coupling: &Coupling,
    source: &[f64],
    target: &mut [f64],
    timestamps: &[i64],
) -> Result<()> {
    let c = coupling.coefficient;
    let noise_scale = (1.0 - c * c).max(0.0).sqrt();
    for (lo, hi) in day_ranges(timestamps) {
        let day = crate::correlation::utc_day(timestamps[lo]);
        if coupling.active_days.as_ref().is_some_and(|days| !days.contains(&day)) {
            continue;
        }
        let day_src = &source[lo..hi];
        let mean = stats::mean(day_src);
        let std = stats::population_std(day_src);
        if std == 0.0 {
            return Err(Error::InfeasibleSpec(format!(
                "coupling source {} is constant on {day}",
                coupling.source
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
            spec.seed,
            &["coupling", &coupling.target.node_id, &coupling.target.metric_name, &day.to_string()],
        ));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for (i, slot) in target[lo..hi].iter_mut().enumerate() {
            let standardized = (day_src[i] - mean) / std;
            let noise = if noise_scale > 0.0 { noise_scale * normal.sample(&mut rng) } else { 0.0 };
            *slot = coupling.mean + coupling.scale * (c * standardized + noise);
        }
    }
    Ok(())
}

fn gen_jobs(
    spec: &GeneratorSpec,
    mix: &JobMixtures,
    inventory: &BTreeMap<String, NodeInfo>,
) -> Result<Vec<JobRecord>> {
    let nodes: Vec<&String> = inventory.keys().collect();
    if nodes.is_empty() {
        return Err(Error::InfeasibleSpec("job generation without nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &["jobs"]));
    let pick_weighted = |rng: &mut ChaCha8Rng, weights: &[f64]| -> usize {
        let total: f64 = weights.iter().sum();
        let mut roll = rng.random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if roll < *w {
                return i;
            }
            roll -= w;
        }
        weights.len() - 1
    };
    let core_weights: Vec<f64> = mix.core_mix.iter().map(|(_, w)| *w).collect();
    let state_weights: Vec<f64> = mix.state_mix.iter().map(|(_, w)| *w).collect();

    let mut submissions: Vec<(i64, JobRecord)> = Vec::new();
    let first_hour = spec.span.0.div_euclid(3_600);
    let last_hour = (spec.span.1 - 1).div_euclid(3_600);
    for hour in first_hour..=last_hour {
        let hour_start = hour * 3_600;
        let hod = hour.rem_euclid(24) as usize;
        let rate = mix.arrival_rates_per_hour[hod];
        let count = if rate > 0.0 {
            Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..count {
            let submit = hour_start + rng.random_range(0..3_600);
            if submit < spec.span.0 || submit >= spec.span.1 {
                continue;
            }
            let start = submit + i64::from(rng.random_range(0..=mix.queue_delay_max));
            let duration = if rng.random_range(0.0..1.0) < mix.short_fraction {
                i64::from(rng.random_range(mix.short_range.0..=mix.short_range.1))
            } else {
                let (lo, hi) = (f64::from(mix.long_range.0), f64::from(mix.long_range.1));
                let log = rng.random_range(lo.ln()..hi.ln());
                (log.exp().round() as i64).clamp(i64::from(mix.long_range.0), i64::from(mix.long_range.1))
            };
            let cores = mix.core_mix[pick_weighted(&mut rng, &core_weights)].0;
            let state = mix.state_mix[pick_weighted(&mut rng, &state_weights)].0;
            let user = format!("u{:04}", rng.random_range(0..mix.user_count));
            let node = nodes[rng.random_range(0..nodes.len())].clone();
            let is_ml = inventory[&node].is_ml_node;
            submissions.push((
                submit,
                JobRecord::new(
                    String::new(),
                    user,
                    submit,
                    start,
                    start + duration,
                    cores,
                    state,
                    is_ml,
                    vec![node],
                )?,
            ));
        }
    }
    submissions.sort_by_key(|(submit, _)| *submit);
    Ok(submissions
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut job))| {
            job.job_id = format!("j{i:07}");
            job
        })
        .collect())
}

/// Generates the bundle and its ground-truth sidecar. Identical specs give
/// byte-identical output.
pub fn gen_bundle(spec: &GeneratorSpec) -> Result<(TraceBundle, GroundTruth)> {
    validate(spec)?;
    let inventory = build_inventory(&spec.racks);

    let step = i64::from(spec.base_interval);
    let first = spec.span.0.div_euclid(step) * step
        + if spec.span.0.rem_euclid(step) == 0 { 0 } else { step };
    let timestamps: Vec<i64> =
        (0i64..).map(|i| first + i * step).take_while(|t| *t < spec.span.1).collect();
    if timestamps.is_empty() && !spec.series.is_empty() {
        return Err(Error::InfeasibleSpec("span too short for one sample".into()));
    }

    let mut values_by_key: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    for s in &spec.series {
        if !inventory.contains_key(&s.node) {
            return Err(Error::UnknownNode(format!("{} has no inventory entry", s.node)));
        }
        values_by_key
            .insert(SeriesKey::new(s.node.clone(), s.metric.clone()), gen_series_values(spec, s, &timestamps));
    }

    for coupling in &spec.couplings {
        let source = values_by_key[&coupling.source].clone();
        let target = values_by_key.get_mut(&coupling.target).expect("validated target");
        apply_coupling(spec, coupling, &source, target, &timestamps)?;
    }

    for injection in &spec.injections {
        let key = SeriesKey::new(injection.node.clone(), injection.metric.clone());
        let Some(values) = values_by_key.get_mut(&key) else {
            return Err(Error::InfeasibleSpec(format!("injection into unknown series {key}")));
        };
        let idx = match timestamps.binary_search(&injection.timestamp) {
            Ok(i) => i,
            Err(_) => {
                return Err(Error::InfeasibleSpec(format!(
                    "injection at {} is off the sampling grid",
                    injection.timestamp
                )))
            }
        };
        let sigma = stats::population_std(values);
        values[idx] += injection.magnitude_sigma * if sigma > 0.0 { sigma } else { 1.0 };
    }

    let series: Vec<MetricSeries> = values_by_key
        .into_iter()
        .map(|(key, values)| {
            let samples =
                timestamps.iter().zip(values).map(|(t, v)| Sample::present(*t, v)).collect();
            MetricSeries::new(key.node_id, key.metric_name, spec.base_interval, samples)
        })
        .collect::<Result<_>>()?;

    let jobs = match &spec.jobs {
        Some(mix) => gen_jobs(spec, mix, &inventory)?,
        None => Vec::new(),
    };

    let planted_pairs = spec
        .couplings
        .iter()
        .map(|c| {
            let pair = if c.source <= c.target {
                (c.source.clone(), c.target.clone())
            } else {
                (c.target.clone(), c.source.clone())
            };
            PlantedPair {
                pair,
                coefficient: c.coefficient,
                active_days: c.active_days.as_ref().map(|d| d.iter().copied().collect()),
            }
        })
        .collect();
    let truth = GroundTruth {
        seed: spec.seed,
        planted_pairs,
        injections: spec.injections.clone(),
        short_fraction: spec.jobs.as_ref().map(|j| j.short_fraction),
        state_mix: spec.jobs.as_ref().map(|j| j.state_mix.clone()),
        core_mode: spec.jobs.as_ref().map(|j| {
            j.core_mix
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite weights").then(b.0.cmp(&a.0)))
                .expect("non-empty mixture")
                .0
        }),
        arrival_rates_per_hour: spec.jobs.as_ref().map(|j| j.arrival_rates_per_hour),
    };

    Ok((TraceBundle::new(series, jobs, inventory)?, truth))
}

/// Ready-made generator configurations used by the test suites, the
/// benchmarks, and the CLI's demo mode.
pub mod presets {
    use super::*;

    /// Epoch seconds of 2022-03-01T00:00:00Z, the default generation origin.
    pub const DEFAULT_ORIGIN: i64 = 1_646_092_800;

    fn ar1_source(mean: f64) -> MetricModel {
        MetricModel::Ar1 {
            mean,
            phi: 0.99,
            noise_std: 0.05,
            quantize: None,
            sin_amplitude: 0.0,
            sin_period_seconds: 0,
        }
    }

    /// Two-day mixed corpus used as the CLI's default demo: three racks
    /// (one ML), load on every node, one always-coupled pair, one one-day
    /// coupling, a planted spike, a constant series for cleanup to catch,
    /// and a small diurnal job stream.
    pub fn demo(seed: u64) -> GeneratorSpec {
        let days: i64 = 2;
        let racks = vec![
            RackSpec { rack_id: "r0".into(), nodes: 6, cores_per_node: 16, is_ml: false },
            RackSpec { rack_id: "r1".into(), nodes: 6, cores_per_node: 16, is_ml: false },
            RackSpec { rack_id: "ml0".into(), nodes: 2, cores_per_node: 64, is_ml: true },
        ];
        let mut series = Vec::new();
        for rack in &racks {
            for i in 0..rack.nodes {
                series.push(SeriesSpec {
                    node: node_name(&rack.rack_id, i),
                    metric: "load1".into(),
                    model: MetricModel::Ar1 {
                        mean: 0.45,
                        phi: 0.99,
                        noise_std: 0.02,
                        quantize: None,
                        sin_amplitude: 0.0,
                        sin_period_seconds: 0,
                    },
                });
            }
        }
        for i in 0..2 {
            series.push(SeriesSpec {
                node: node_name("ml0", i),
                metric: "power_watts".into(),
                model: MetricModel::Ar1 {
                    mean: 320.0,
                    phi: 0.9,
                    noise_std: 6.0,
                    quantize: Some(0.5),
                    sin_amplitude: 0.0,
                    sin_period_seconds: 0,
                },
            });
        }
        // A frequency lock that never moves; cleanup should drop it.
        series.push(SeriesSpec {
            node: node_name("r1", 5),
            metric: "cpu_freq_mhz".into(),
            model: MetricModel::Constant { value: 2_400.0 },
        });

        let origin_day = crate::correlation::utc_day(DEFAULT_ORIGIN);
        let couplings = vec![
            Coupling {
                source: SeriesKey::new(node_name("r0", 2), "load1"),
                target: SeriesKey::new(node_name("r0", 3), "load1"),
                coefficient: 0.997,
                mean: 0.45,
                scale: 0.1,
                active_days: None,
            },
            Coupling {
                source: SeriesKey::new(node_name("r1", 0), "load1"),
                target: SeriesKey::new(node_name("r1", 1), "load1"),
                coefficient: 0.95,
                mean: 0.45,
                scale: 0.1,
                active_days: Some([origin_day].into_iter().collect()),
            },
        ];
        let injections = vec![Injection {
            node: node_name("r0", 0),
            metric: "load1".into(),
            timestamp: DEFAULT_ORIGIN + 86_400 + 6 * 3_600,
            magnitude_sigma: 10.0,
        }];

        let shape: [f64; 24] = [
            0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 1.2, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6,
            1.2, 0.8, 0.8, 0.8, 0.4, 0.4, 0.4,
        ];
        let total_per_day = 1_500.0;
        let shape_sum: f64 = shape.iter().sum();
        let mut rates = [0.0; 24];
        for (r, s) in rates.iter_mut().zip(shape) {
            *r = s * total_per_day / shape_sum;
        }

        GeneratorSpec {
            seed,
            span: (DEFAULT_ORIGIN, DEFAULT_ORIGIN + days * 86_400),
            base_interval: 15,
            racks,
            series,
            couplings,
            injections,
            jobs: Some(JobMixtures {
                arrival_rates_per_hour: rates,
                short_fraction: 0.889,
                short_range: (10, 300),
                long_range: (301, 43_200),
                core_mix: vec![
                    (1, 0.14),
                    (2, 0.10),
                    (4, 0.12),
                    (8, 0.13),
                    (16, 0.35),
                    (32, 0.11),
                    (64, 0.05),
                ],
                state_mix: vec![
                    (JobState::Completed, 0.92),
                    (JobState::Failed, 0.06),
                    (JobState::Cancelled, 0.01),
                    (JobState::Timeout, 0.01),
                ],
                user_count: 60,
                queue_delay_max: 120,
            }),
        }
    }

    /// Ten days of 60 s telemetry holding 5 always-coupled pairs, 55
    /// rotating pairs (coupled only on a proper subset of days), and
    /// uncoupled background series.
    pub fn persistence(seed: u64) -> GeneratorSpec {
        let days: i64 = 10;
        let span = (DEFAULT_ORIGIN, DEFAULT_ORIGIN + days * 86_400);
        // Two nodes per pair (5 persistent, then 55 rotating), 10 uncoupled.
        let total_nodes: u32 = 5 * 2 + 55 * 2 + 10;
        let series = (0..total_nodes)
            .map(|i| SeriesSpec {
                node: node_name("r0", i),
                metric: "load1".into(),
                model: ar1_source(0.5),
            })
            .collect();

        let mut couplings = Vec::new();
        let mut couple = |src: u32, dst: u32, coefficient: f64, active: Option<BTreeSet<NaiveDate>>| {
            couplings.push(Coupling {
                source: SeriesKey::new(node_name("r0", src), "load1"),
                target: SeriesKey::new(node_name("r0", dst), "load1"),
                coefficient,
                mean: 0.5,
                scale: 0.1,
                active_days: active,
            });
        };
        for p in 0..5 {
            couple(2 * p, 2 * p + 1, 0.997, None);
        }
        let mut rot_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &["rotation"]));
        let origin_day = crate::correlation::utc_day(DEFAULT_ORIGIN);
        for r in 0..55 {
            // Active on 3..=7 of the 10 days: strong somewhere, never everywhere.
            let active_count = rot_rng.random_range(3usize..=7);
            let mut days_set = BTreeSet::new();
            while days_set.len() < active_count {
                let offset = rot_rng.random_range(0..days);
                days_set.insert(origin_day + chrono::Days::new(offset as u64));
            }
            let base = 10 + 2 * r;
            couple(base, base + 1, 0.98, Some(days_set));
        }

        GeneratorSpec {
            seed,
            span,
            base_interval: 60,
            racks: vec![RackSpec {
                rack_id: "r0".into(),
                nodes: total_nodes,
                cores_per_node: 16,
                is_ml: false,
            }],
            series,
            couplings,
            injections: Vec::new(),
            jobs: None,
        }
    }

    /// Five days of jobs matching the documented workload mixtures:
    /// 88.9% short runtimes, a 16-core mode, and a 92/6/1/1 state split.
    pub fn workload(seed: u64, total_jobs: u64) -> GeneratorSpec {
        let days: i64 = 5;
        // Diurnal shape: quiet nights, busy office hours.
        let shape: [f64; 24] = [
            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0,
            3.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0,
        ];
        let shape_sum: f64 = shape.iter().sum();
        let scale = total_jobs as f64 / (days as f64 * shape_sum);
        let mut rates = [0.0; 24];
        for (r, s) in rates.iter_mut().zip(shape) {
            *r = s * scale;
        }
        GeneratorSpec {
            seed,
            span: (DEFAULT_ORIGIN, DEFAULT_ORIGIN + days * 86_400),
            base_interval: 60,
            racks: vec![RackSpec {
                rack_id: "r0".into(),
                nodes: 8,
                cores_per_node: 64,
                is_ml: false,
            }],
            series: Vec::new(),
            couplings: Vec::new(),
            injections: Vec::new(),
            jobs: Some(JobMixtures {
                arrival_rates_per_hour: rates,
                short_fraction: 0.889,
                short_range: (10, 300),
                long_range: (301, 43_200),
                core_mix: vec![
                    (1, 0.14),
                    (2, 0.10),
                    (4, 0.12),
                    (8, 0.13),
                    (16, 0.35),
                    (32, 0.11),
                    (64, 0.05),
                ],
                state_mix: vec![
                    (JobState::Completed, 0.92),
                    (JobState::Failed, 0.06),
                    (JobState::Cancelled, 0.01),
                    (JobState::Timeout, 0.01),
                ],
                user_count: 200,
                queue_delay_max: 120,
            }),
        }
    }

    /// A single 15 s load signal whose structure lives below the sampling
    /// scale of coarse models: a briskly wandering mean-reverting walk plus
    /// a 55-second wave. Resampling to 10 minutes blurs the walk's current
    /// level (and averages the wave away entirely), which is what the
    /// granularity study is designed to expose.
    pub fn granularity(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            seed,
            span: (DEFAULT_ORIGIN, DEFAULT_ORIGIN + 6 * 86_400),
            base_interval: 15,
            racks: vec![RackSpec {
                rack_id: "r0".into(),
                nodes: 1,
                cores_per_node: 16,
                is_ml: false,
            }],
            series: vec![SeriesSpec {
                node: node_name("r0", 0),
                metric: "load1".into(),
                model: MetricModel::Ar1 {
                    mean: 0.5,
                    phi: 0.99,
                    noise_std: 0.03,
                    quantize: None,
                    sin_amplitude: 0.05,
                    sin_period_seconds: 55,
                },
            }],
            couplings: Vec::new(),
            injections: Vec::new(),
            jobs: None,
        }
    }

    /// Telemetry-like corpus for the storage probe: slow quantized walks
    /// whose 15 s samples repeat (compressible), while coarse resampling
    /// decorrelates and diversifies the values.
    pub fn storage_ar1(seed: u64, series_count: u32) -> GeneratorSpec {
        storage_spec(seed, series_count, MetricModel::Ar1 {
            mean: 40.0,
            phi: 0.99,
            noise_std: 1.0,
            quantize: Some(0.25),
            sin_amplitude: 0.0,
            sin_period_seconds: 0,
        })
    }

    /// Incompressible control corpus: independent draws every sample.
    pub fn storage_iid(seed: u64, series_count: u32) -> GeneratorSpec {
        storage_spec(seed, series_count, MetricModel::Ar1 {
            mean: 40.0,
            phi: 0.0,
            noise_std: 10.0,
            quantize: None,
            sin_amplitude: 0.0,
            sin_period_seconds: 0,
        })
    }

    fn storage_spec(seed: u64, series_count: u32, model: MetricModel) -> GeneratorSpec {
        let series = (0..series_count)
            .map(|i| SeriesSpec {
                node: node_name("r0", i),
                metric: "power_watts".into(),
                model: model.clone(),
            })
            .collect();
        GeneratorSpec {
            seed,
            span: (DEFAULT_ORIGIN, DEFAULT_ORIGIN + 2 * 86_400),
            base_interval: 15,
            racks: vec![RackSpec {
                rack_id: "r0".into(),
                nodes: series_count,
                cores_per_node: 16,
                is_ml: false,
            }],
            series,
            couplings: Vec::new(),
            injections: Vec::new(),
            jobs: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation;

    fn tiny_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            seed,
            span: (0, 2 * 86_400),
            base_interval: 300,
            racks: vec![RackSpec {
                rack_id: "r0".into(),
                nodes: 3,
                cores_per_node: 16,
                is_ml: false,
            }],
            series: vec![
                SeriesSpec {
                    node: "r0-00".into(),
                    metric: "load1".into(),
                    model: MetricModel::Ar1 {
                        mean: 1.0,
                        phi: 0.9,
                        noise_std: 0.2,
                        quantize: None,
                        sin_amplitude: 0.0,
                        sin_period_seconds: 0,
                    },
                },
                SeriesSpec {
                    node: "r0-01".into(),
                    metric: "load1".into(),
                    model: MetricModel::Sinusoid {
                        mean: 0.5,
                        amplitude: 0.3,
                        period_seconds: 3_600,
                        noise_std: 0.05,
                    },
                },
                SeriesSpec {
                    node: "r0-02".into(),
                    metric: "load1".into(),
                    model: MetricModel::Constant { value: 2.0 },
                },
            ],
            couplings: Vec::new(),
            injections: Vec::new(),
            jobs: None,
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let (a, truth_a) = gen_bundle(&tiny_spec(5)).unwrap();
        let (b, truth_b) = gen_bundle(&tiny_spec(5)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(truth_a, truth_b);

        let (c, _) = gen_bundle(&tiny_spec(6)).unwrap();
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn grid_and_inventory_shape() {
        let (bundle, _) = gen_bundle(&tiny_spec(1)).unwrap();
        assert_eq!(bundle.series().len(), 3);
        assert_eq!(bundle.inventory().len(), 3);
        for s in bundle.series() {
            assert_eq!(s.base_interval, 300);
            assert_eq!(s.len(), 2 * 86_400 / 300);
            assert!(s.samples.iter().all(|x| x.value.is_some()));
        }
    }

    fn coupled_spec(coefficient: f64, active: Option<BTreeSet<NaiveDate>>) -> GeneratorSpec {
        let mut spec = tiny_spec(77);
        spec.couplings.push(Coupling {
            source: SeriesKey::new("r0-00", "load1"),
            target: SeriesKey::new("r0-01", "load1"),
            coefficient,
            mean: 0.5,
            scale: 0.2,
            active_days: active,
        });
        spec
    }

    #[test]
    fn unit_coupling_gives_perfect_daily_spearman() {
        let (bundle, truth) = gen_bundle(&coupled_spec(1.0, None)).unwrap();
        assert_eq!(truth.planted_pairs.len(), 1);
        let a = bundle.find(&SeriesKey::new("r0-00", "load1")).unwrap();
        let b = bundle.find(&SeriesKey::new("r0-01", "load1")).unwrap();
        for day in correlation::days_covered(&bundle) {
            let (lo, hi) = correlation::day_bounds(day);
            let (xs, ys) = correlation::align_pair(&a.slice(lo, hi), &b.slice(lo, hi));
            let rho = correlation::spearman(&xs, &ys).unwrap().coefficient;
            assert_eq!(rho, 1.0, "day {day}");
        }
    }

    #[test]
    fn rotating_coupling_only_binds_active_days() {
        let day0 = correlation::utc_day(0);
        let active: BTreeSet<NaiveDate> = [day0].into_iter().collect();
        let (bundle, _) = gen_bundle(&coupled_spec(0.99, Some(active))).unwrap();
        let a = bundle.find(&SeriesKey::new("r0-00", "load1")).unwrap();
        let b = bundle.find(&SeriesKey::new("r0-01", "load1")).unwrap();

        let day_rho = |d: NaiveDate| {
            let (lo, hi) = correlation::day_bounds(d);
            let (xs, ys) = correlation::align_pair(&a.slice(lo, hi), &b.slice(lo, hi));
            correlation::spearman(&xs, &ys).unwrap().coefficient
        };
        assert!(day_rho(day0) > 0.9);
        assert!(day_rho(day0.succ_opt().unwrap()) < 0.9);
    }

    #[test]
    fn injection_spikes_the_right_sample() {
        let mut spec = tiny_spec(3);
        spec.injections.push(Injection {
            node: "r0-00".into(),
            metric: "load1".into(),
            timestamp: 86_400,
            magnitude_sigma: 10.0,
        });
        let (with, _) = gen_bundle(&spec).unwrap();
        let mut without = spec.clone();
        without.injections.clear();
        let (base, _) = gen_bundle(&without).unwrap();

        let key = SeriesKey::new("r0-00", "load1");
        let spiked = with.find(&key).unwrap();
        let plain = base.find(&key).unwrap();
        let idx = spiked.samples.iter().position(|s| s.timestamp == 86_400).unwrap();
        let sigma = stats::population_std(&plain.present_values().collect::<Vec<_>>());
        let diff = spiked.samples[idx].value.unwrap() - plain.samples[idx].value.unwrap();
        assert!((diff - 10.0 * sigma).abs() < 1e-9);
        // All other samples untouched.
        for (i, (s, p)) in spiked.samples.iter().zip(&plain.samples).enumerate() {
            if i != idx {
                assert_eq!(s.value, p.value);
            }
        }
    }

    #[test]
    fn job_mixture_fractions_recovered() {
        let spec = presets::workload(11, 10_000);
        let (bundle, truth) = gen_bundle(&spec).unwrap();
        let jobs = bundle.jobs();
        assert!(jobs.len() > 8_000, "got {} jobs", jobs.len());

        let fractions = crate::characterization::state_fractions(jobs).unwrap();
        for (state, expected) in truth.state_mix.unwrap() {
            let got = fractions.get(&state).copied().unwrap_or(0.0);
            assert!(
                (got - expected).abs() < 0.02,
                "{state}: {got} vs {expected}"
            );
        }

        let completed = crate::characterization::duration_stats(jobs, &[JobState::Completed])
            .unwrap();
        assert!((completed.fraction_below(300) - 0.889).abs() < 0.02);

        let (_, mode) = crate::characterization::core_histogram(jobs).unwrap();
        assert_eq!(mode, 16);

        // Requested-core variation stays within the documented bound.
        for user in crate::characterization::cov_per_user(jobs) {
            assert!(user.cov <= 2.0, "user {} CoV {}", user.user_id, user.cov);
        }

        // Diurnal shape: office hours outpace the small hours.
        let arrivals =
            crate::characterization::arrivals_grouped(jobs, crate::characterization::ArrivalGroup::HourOfDay);
        let hour = |h: usize| arrivals[h].1;
        for busy in 9..17 {
            for quiet in 0..6 {
                assert!(hour(busy) > hour(quiet), "hour {busy} vs {quiet}");
            }
        }
    }

    #[test]
    fn jobs_are_deterministic_and_ordered() {
        let spec = presets::workload(42, 2_000);
        let (a, _) = gen_bundle(&spec).unwrap();
        let (b, _) = gen_bundle(&spec).unwrap();
        assert_eq!(a.jobs(), b.jobs());
        assert!(a.jobs().windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        assert!(a.jobs().iter().all(|j| j.submit_time <= j.start_time && j.start_time <= j.end_time));
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut bad = tiny_spec(0);
        bad.span = (10, 10);
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));

        let mut bad = tiny_spec(0);
        bad.series[0].model = MetricModel::Ar1 {
            mean: 0.0,
            phi: 1.5,
            noise_std: 0.1,
            quantize: None,
            sin_amplitude: 0.0,
            sin_period_seconds: 0,
        };
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));

        let mut bad = coupled_spec(0.9, None);
        bad.couplings[0].source = SeriesKey::new("ghost", "load1");
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));

        // Coupling onto a constant source is degenerate.
        let mut bad = coupled_spec(0.9, None);
        bad.couplings[0].source = SeriesKey::new("r0-02", "load1");
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));

        let mut bad = presets::workload(0, 100);
        if let Some(jobs) = &mut bad.jobs {
            jobs.arrival_rates_per_hour[3] = -1.0;
        }
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));

        let mut bad = presets::workload(0, 100);
        if let Some(jobs) = &mut bad.jobs {
            jobs.state_mix = vec![(JobState::Completed, 0.5), (JobState::Failed, 0.4)];
        }
        assert!(matches!(gen_bundle(&bad), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn quantized_walk_repeats_values() {
        let spec = presets::storage_ar1(9, 1);
        let (bundle, _) = gen_bundle(&spec).unwrap();
        let values: Vec<f64> = bundle.series()[0].present_values().collect();
        let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
        // Quantization plus slow drift keeps the alphabet small relative to
        // the sample count; that is the compressibility lever.
        assert!(distinct.len() * 20 < values.len(), "{} distinct of {}", distinct.len(), values.len());
    }

    #[test]
    fn demo_preset_generates() {
        let (bundle, truth) = gen_bundle(&presets::demo(42)).unwrap();
        assert_eq!(bundle.series().len(), 17);
        assert_eq!(bundle.inventory().len(), 14);
        assert!(bundle.inventory().values().any(|n| n.is_ml_node));
        assert_eq!(truth.planted_pairs.len(), 2);
        assert_eq!(truth.injections.len(), 1);
        let jobs = bundle.jobs();
        assert!(jobs.len() > 2_000, "{} jobs", jobs.len());
        // The constant series is present pre-cleanup.
        assert!(bundle
            .series()
            .iter()
            .any(|s| s.metric_name == "cpu_freq_mhz"));
    }
}
