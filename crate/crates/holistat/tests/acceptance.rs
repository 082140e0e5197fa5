//! Acceptance gate: one test per shipping criterion, tolerances pinned
//! inline. Each test prints its own `criterion N PASS` line (visible with
//! `--nocapture`); the harness result line is the authoritative verdict.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use holistat::characterization;
use holistat::correlation::{self, CorrMethod};
use holistat::predictor::{self, LstmModel, TrainConfig, WindowSample};
use holistat::storage::{self, DeflateCodec};
use holistat::synth::{self, presets};
use holistat::trace::{self, JobState, MetricSeries, Sample, TraceBundle};
use holistat::{anomaly, stats};

// ---------------------------------------------------------------------------
// 1. Correlation oracle equivalence

const ORACLE_PAIRS: usize = 500;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| **w < *v).count() as f64;
            let equal = x.iter().filter(|w| **w == *v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

fn oracle_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut con, mut dis, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tie_x += 1;
            }
            if dy == 0.0 {
                tie_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    con += 1;
                } else {
                    dis += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    (con - dis) as f64 / ((n0 - tie_x as f64) * (n0 - tie_y as f64)).sqrt()
}

/// Lattice-valued vector: ties occur, transforms stay injective in floats.
fn lattice_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-30i32..=30))).collect();
        if v.iter().any(|a| *a != v[0]) {
            return v;
        }
    }
}

#[test]
fn criterion_01_correlation_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    let mut worst: f64 = 0.0;
    for trial in 0..ORACLE_PAIRS {
        let n = rng.random_range(3..=50);
        // Alternate continuous and tied vectors to exercise both paths.
        let (x, y) = if trial % 2 == 0 {
            let cont = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-100.0..100.0)).collect()
            };
            (cont(&mut rng), cont(&mut rng))
        } else {
            (lattice_vector(&mut rng, n), lattice_vector(&mut rng, n))
        };

        let checks = [
            (correlation::pearson(&x, &y).unwrap().coefficient, oracle_pearson(&x, &y)),
            (correlation::spearman(&x, &y).unwrap().coefficient, oracle_spearman(&x, &y)),
            (correlation::kendall(&x, &y).unwrap().coefficient, oracle_kendall(&x, &y)),
        ];
        for (got, want) in checks {
            let diff = (got - want).abs();
            worst = worst.max(diff);
            assert!(diff <= ORACLE_TOL, "trial {trial}: {got} vs oracle {want} (diff {diff:e})");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < ORACLE_BUDGET, "oracle comparison took {elapsed:?}");
    println!(
        "criterion 1 PASS: {ORACLE_PAIRS} pairs x 3 coefficients within {ORACLE_TOL:e} \
         (worst {worst:.2e}) in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 2. Invariance suite

const INVARIANCE_TRIALS: usize = 10_000;
const INVARIANCE_TOL: f64 = 1e-12;

/// Random strictly increasing map applied pointwise: distinct inputs get
/// strictly increasing random outputs, ties map to ties.
fn random_monotone_map(values: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut distinct: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
    distinct.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
    distinct.dedup();
    let mut level = rng.random_range(-50.0..50.0);
    let mut table = BTreeMap::new();
    for bits in distinct {
        level += rng.random_range(0.01..5.0);
        table.insert(bits, level);
    }
    values.iter().map(|v| table[&v.to_bits()]).collect()
}

#[test]
fn criterion_02_invariance_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE02);
    let mut violations = 0u32;
    let mut worst: f64 = 0.0;
    let mut check = |a: f64, b: f64| {
        let diff = (a - b).abs();
        worst = worst.max(diff);
        if diff > INVARIANCE_TOL {
            violations += 1;
        }
    };
    for _ in 0..INVARIANCE_TRIALS {
        let n = rng.random_range(3..=40);
        let x = lattice_vector(&mut rng, n);
        let y = lattice_vector(&mut rng, n);

        // Rank methods: strictly monotone transform of one side.
        let fx = random_monotone_map(&x, &mut rng);
        check(
            correlation::spearman(&fx, &y).unwrap().coefficient,
            correlation::spearman(&x, &y).unwrap().coefficient,
        );
        check(
            correlation::kendall(&fx, &y).unwrap().coefficient,
            correlation::kendall(&x, &y).unwrap().coefficient,
        );

        // Pearson: positive affine transform.
        let a = rng.random_range(0.1..8.0);
        let b = rng.random_range(-10.0..10.0);
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        check(
            correlation::pearson(&ax, &y).unwrap().coefficient,
            correlation::pearson(&x, &y).unwrap().coefficient,
        );

        // Symmetry, all three methods.
        check(
            correlation::pearson(&x, &y).unwrap().coefficient,
            correlation::pearson(&y, &x).unwrap().coefficient,
        );
        check(
            correlation::spearman(&x, &y).unwrap().coefficient,
            correlation::spearman(&y, &x).unwrap().coefficient,
        );
        check(
            correlation::kendall(&x, &y).unwrap().coefficient,
            correlation::kendall(&y, &x).unwrap().coefficient,
        );
    }
    assert_eq!(violations, 0, "{violations} invariance violations beyond {INVARIANCE_TOL:e}");
    println!(
        "criterion 2 PASS: {INVARIANCE_TRIALS} trials x 6 checks, zero violations \
         (worst deviation {worst:.2e})"
    );
}

// ---------------------------------------------------------------------------
// 3. Persistence recovery

const PERSISTENCE_THRESHOLD: f64 = 0.9;
const PERSISTENCE_BUDGET: Duration = Duration::from_secs(60);

#[test]
fn criterion_03_persistence_recovery() {
    let start = Instant::now();
    let (bundle, truth) = synth::gen_bundle(&presets::persistence(7)).unwrap();

    // Daily all-pairs Spearman on 300 s resamples, then the cross-day
    // intersection of very-strong pairs.
    let resampled: Vec<MetricSeries> =
        bundle.series().iter().map(|s| trace::resample(s, 300).unwrap()).collect();
    let days = correlation::days_covered(&bundle);
    assert_eq!(days.len(), 10);

    let mut daily = Vec::new();
    for day in days {
        let (lo, hi) = correlation::day_bounds(day);
        let day_bundle = TraceBundle::new(
            resampled.iter().map(|s| s.slice(lo, hi)).collect(),
            Vec::new(),
            bundle.inventory().clone(),
        )
        .unwrap();
        let (results, _) = correlation::all_pairs(&day_bundle, CorrMethod::Spearman).unwrap();
        daily.push(correlation::DailyPairSet::from_results(day, &results, PERSISTENCE_THRESHOLD));
    }
    let report = correlation::persistent_pairs(&daily).unwrap();

    let planted: std::collections::BTreeSet<_> = truth
        .planted_pairs
        .iter()
        .filter(|p| p.active_days.is_none())
        .map(|p| p.pair.clone())
        .collect();
    assert_eq!(planted.len(), 5);
    assert_eq!(report.persistent, planted, "persistent set differs from planted set");

    // The rotating pairs really are strong somewhere — they fooled at least
    // one day each — yet none of them persisted.
    let rotating: Vec<_> =
        truth.planted_pairs.iter().filter(|p| p.active_days.is_some()).collect();
    assert!(rotating.len() >= 50);
    let seen_somewhere = rotating
        .iter()
        .filter(|p| daily.iter().any(|d| d.strong_pairs.contains(&p.pair)))
        .count();
    assert!(seen_somewhere >= 50, "only {seen_somewhere} rotating pairs ever crossed 0.9");

    let elapsed = start.elapsed();
    assert!(elapsed < PERSISTENCE_BUDGET, "persistence run took {elapsed:?}");
    println!(
        "criterion 3 PASS: exactly the 5 planted pairs persist across 10 days \
         ({} rotating decoys crossed the bar at least once) in {elapsed:?}",
        seen_somewhere
    );
}

// ---------------------------------------------------------------------------
// 4. Moving Z-score

const ZSCORE_AFFINE_TOL: f64 = 1e-9;
const SPIKE_SEEDS: u64 = 5;

fn series_from(values: &[f64]) -> MetricSeries {
    let samples = values
        .iter()
        .enumerate()
        .map(|(i, v)| Sample::present(i as i64 * 15, *v))
        .collect();
    MetricSeries::new("n1", "load1", 15, samples).unwrap()
}

#[test]
fn criterion_04_moving_zscore_properties() {
    // Hand example: window [1,2,3], next value 4 → z = (4-2)/1 = 2, exactly.
    let points = anomaly::moving_zscore(&series_from(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].z, 2.0);

    // Affine invariance.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE04);
    let mut level = 0.0;
    let walk: Vec<f64> = (0..2_000)
        .map(|_| {
            level += rng.random_range(-1.0..1.0);
            level
        })
        .collect();
    let scaled: Vec<f64> = walk.iter().map(|v| 3.25 * v - 7.0).collect();
    let z_raw = anomaly::moving_zscore(&series_from(&walk), 60).unwrap();
    let z_scaled = anomaly::moving_zscore(&series_from(&scaled), 60).unwrap();
    let worst_affine = z_raw
        .iter()
        .zip(&z_scaled)
        .map(|(a, b)| (a.z - b.z).abs())
        .fold(0.0f64, f64::max);
    assert!(worst_affine <= ZSCORE_AFFINE_TOL, "affine drift {worst_affine:e}");

    // Flag fraction at the 97th percentile on a 10^4-point series.
    let noise: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = anomaly::detect_anomalies(&series_from(&noise), 100, 97.0).unwrap();
    let zs = anomaly::moving_zscore(&series_from(&noise), 100).unwrap();
    let ties = zs.iter().filter(|p| p.z.abs() == report.threshold_value).count();
    let cap = 0.03 * report.total_points as f64 + ties as f64 + 1.0;
    assert!(
        (report.flagged.len() as f64) <= cap,
        "{} flags over {} points exceeds 3% + tie slack",
        report.flagged.len(),
        report.total_points
    );

    // A planted 10-sigma spike is always flagged.
    for seed in 0..SPIKE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = stats::sample_std(&values);
        let spike_idx = 7_000;
        values[spike_idx] += 10.0 * sigma;
        let series = series_from(&values);
        let report = anomaly::detect_anomalies(&series, 100, 97.0).unwrap();
        let spike_ts = spike_idx as i64 * 15;
        assert!(
            report.flagged.contains(&spike_ts),
            "seed {seed}: 10-sigma spike at t={spike_ts} not flagged"
        );
    }
    println!(
        "criterion 4 PASS: exact hand example, affine drift <= {ZSCORE_AFFINE_TOL:e}, \
         flag fraction capped, {SPIKE_SEEDS}/{SPIKE_SEEDS} spikes flagged"
    );
}

// ---------------------------------------------------------------------------
// 5. LSTM gradient check

const GRADIENT_REL_TOL: f64 = 1e-4;
const GRADIENT_BUDGET: Duration = Duration::from_secs(10);

#[test]
fn criterion_05_lstm_gradient_check() {
    let start = Instant::now();
    let model = LstmModel::init(3, 4, 2, 42);
    assert!(model.param_count() <= 200, "model has {} parameters", model.param_count());

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    let window = WindowSample {
        inputs: (0..6)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        target: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    // Delta large enough that every residual sits in the smooth quadratic
    // region; central differences then see no kink.
    let delta = 4.0;

    let (grad, _) = model.gradient(&window, delta).unwrap();
    let analytic = grad.to_flat();
    let theta = model.to_flat();

    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let eps = 1e-5 * theta[i].abs().max(1.0);
        let mut plus = theta.clone();
        plus[i] += eps;
        let mut minus = theta.clone();
        minus[i] -= eps;
        let loss_at = |params: &[f64]| {
            let m = model.from_flat(params).unwrap();
            predictor::huber(&m.forward(&window.inputs).unwrap(), &window.target, delta).unwrap()
        };
        let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        assert!(
            rel <= GRADIENT_REL_TOL,
            "parameter {i}: analytic {} vs finite-difference {fd} (rel {rel:e})",
            analytic[i]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < GRADIENT_BUDGET, "gradient check took {elapsed:?}");
    println!(
        "criterion 5 PASS: {} parameters within {GRADIENT_REL_TOL:e} of central differences \
         (worst {worst:.2e}) in {elapsed:?}",
        theta.len()
    );
}

// ---------------------------------------------------------------------------
// 6. Granularity study: the 10-minute model never wins

const STUDY_SEEDS: std::ops::RangeInclusive<u64> = 1..=5;
const STUDY_BUDGET_PER_RUN: Duration = Duration::from_secs(300);

#[test]
fn criterion_06_granularity_study_coarse_never_best() {
    let granularities = [15u32, 60, 300, 600];
    let mut bests = Vec::new();
    for seed in STUDY_SEEDS {
        let (bundle, _) = synth::gen_bundle(&presets::granularity(seed)).unwrap();
        let config = TrainConfig {
            learning_rate: 0.2,
            huber_delta: 1.0,
            max_epochs: 60,
            patience: 12,
            eval_fraction: 0.1,
            seed,
            hidden_size: 8,
        };
        let start = Instant::now();
        let cells = predictor::granularity_study(bundle.series(), &granularities, &config).unwrap();
        let elapsed = start.elapsed();
        assert!(elapsed < STUDY_BUDGET_PER_RUN, "seed {seed}: study took {elapsed:?}");

        let best = cells.iter().find(|c| c.best).expect("study marks a best cell");
        let losses: Vec<String> =
            cells.iter().map(|c| format!("{}s={:.5}", c.granularity, c.eval_loss)).collect();
        println!("  seed {seed}: best {}s ({}) in {elapsed:?}", best.granularity, losses.join(" "));
        assert_ne!(best.granularity, 600, "seed {seed}: the 10-minute model won");
        bests.push(best.granularity);
    }
    println!("criterion 6 PASS: per-run best granularities {bests:?} — 600 s never best");
}

// ---------------------------------------------------------------------------
// 7. Storage sub-linearity

const STORAGE_SUBLINEAR_FACTOR: f64 = 0.6;
const STORAGE_IID_BAND: f64 = 0.2;

#[test]
fn criterion_07_storage_sublinearity() {
    let codec = DeflateCodec::default();

    let (bundle, _) = synth::gen_bundle(&presets::storage_ar1(11, 4)).unwrap();
    let report = storage::compression_study(bundle.series(), &[15, 600], &codec).unwrap();
    assert!((report.sample_ratio - 40.0).abs() < 1e-9, "sample ratio {}", report.sample_ratio);
    assert!(
        report.compressed_ratio < 40.0,
        "AR(1) compressed ratio {} not strictly below 40",
        report.compressed_ratio
    );
    assert!(
        report.compressed_ratio < STORAGE_SUBLINEAR_FACTOR * report.sample_ratio,
        "AR(1) compressed ratio {} not below {} x sample ratio",
        report.compressed_ratio,
        STORAGE_SUBLINEAR_FACTOR
    );

    let (control, _) = synth::gen_bundle(&presets::storage_iid(12, 4)).unwrap();
    let iid = storage::compression_study(control.series(), &[15, 600], &codec).unwrap();
    let relative = (iid.compressed_ratio / iid.sample_ratio - 1.0).abs();
    assert!(
        relative <= STORAGE_IID_BAND,
        "i.i.d. control ratio {} strays {relative:.3} from sample ratio {}",
        iid.compressed_ratio,
        iid.sample_ratio
    );
    println!(
        "criterion 7 PASS: AR(1) 40x samples -> {:.2}x compressed bytes; \
         i.i.d. control {:.2}x (within {:.0}%)",
        report.compressed_ratio,
        iid.compressed_ratio,
        STORAGE_IID_BAND * 100.0
    );
}

// ---------------------------------------------------------------------------
// 8. Workload statistics recovery

const SHORT_FRACTION_TOL: f64 = 0.01;
const STATE_FRACTION_TOL: f64 = 0.005;

#[test]
fn criterion_08_workload_statistics_recovery() {
    let (bundle, truth) = synth::gen_bundle(&presets::workload(2022, 100_000)).unwrap();
    let jobs = bundle.jobs();
    assert!(jobs.len() >= 95_000, "only {} jobs generated", jobs.len());

    let completed = characterization::duration_stats(jobs, &[JobState::Completed]).unwrap();
    let short = completed.fraction_below(300);
    assert!(
        (short - 0.889).abs() <= SHORT_FRACTION_TOL,
        "short-job fraction {short} strays from 0.889"
    );

    let (_, mode) = characterization::core_histogram(jobs).unwrap();
    assert_eq!(mode, 16, "core-count mode");

    let fractions = characterization::state_fractions(jobs).unwrap();
    for (state, expected) in truth.state_mix.as_ref().unwrap() {
        let got = fractions.get(state).copied().unwrap_or(0.0);
        assert!(
            (got - expected).abs() <= STATE_FRACTION_TOL,
            "{state}: fraction {got} strays from {expected}"
        );
    }
    println!(
        "criterion 8 PASS: {} jobs -> short fraction {short:.4} (target 0.889 ± {SHORT_FRACTION_TOL}), \
         mode 16, state fractions within ± {STATE_FRACTION_TOL}",
        jobs.len()
    );
}

// ---------------------------------------------------------------------------
// 9. Conservation checks

const CPU_HOURS_REL_TOL: f64 = 1e-9;
const RESAMPLE_REL_TOL: f64 = 1e-12;
const STATE_SUM_TOL: f64 = 1e-9;

#[test]
fn criterion_09_conservation_checks() {
    let (bundle, _) = synth::gen_bundle(&presets::workload(9, 20_000)).unwrap();
    let jobs = bundle.jobs();

    // CPU-hours split across days must re-add to the direct total.
    let per_day = characterization::cpu_hours_per_day(jobs);
    let split_total: f64 = per_day.iter().map(|(_, h)| h).sum();
    let direct_total: f64 = jobs
        .iter()
        .filter(|j| j.runtime() > 0)
        .map(|j| f64::from(j.cores_requested) * j.runtime() as f64 / 3_600.0)
        .sum();
    let rel = (split_total - direct_total).abs() / direct_total;
    assert!(rel <= CPU_HOURS_REL_TOL, "cpu-hours drift {rel:e}");

    // Length/state bins must conserve per-state runtime totals exactly.
    let bins =
        characterization::runtime_by_length_and_state(jobs, &[60, 300, 1_800, 7_200, 21_600])
            .unwrap();
    let mut binned: BTreeMap<JobState, u64> = BTreeMap::new();
    for bin in &bins {
        for (state, seconds) in &bin.by_state {
            *binned.entry(*state).or_default() += seconds;
        }
    }
    let mut direct: BTreeMap<JobState, u64> = BTreeMap::new();
    for j in jobs {
        *direct.entry(j.state).or_default() += j.runtime() as u64;
    }
    assert_eq!(binned, direct, "runtime bins lose or invent job-seconds");

    // Resampling conserves mass: sum(bin mean x bin present count) equals
    // the raw present sum. Exercised with a gappy series.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE09);
    let samples: Vec<Sample> = (0..2_000)
        .map(|i| {
            let t = i as i64 * 15;
            if i % 7 == 3 {
                Sample::missing(t)
            } else {
                Sample::present(t, rng.random_range(0.0..100.0))
            }
        })
        .collect();
    let series = MetricSeries::new("n1", "load1", 15, samples).unwrap();
    let coarse = trace::resample(&series, 600).unwrap();
    let raw_mass: f64 = series.present_values().sum();
    let mut binned_mass = 0.0;
    for s in &coarse.samples {
        if let Some(v) = s.value {
            let count = series
                .samples
                .iter()
                .filter(|r| {
                    r.value.is_some() && r.timestamp >= s.timestamp && r.timestamp < s.timestamp + 600
                })
                .count();
            binned_mass += v * count as f64;
        }
    }
    let resample_rel = (binned_mass - raw_mass).abs() / raw_mass;
    assert!(resample_rel <= RESAMPLE_REL_TOL, "resample mass drift {resample_rel:e}");

    // State fractions form a distribution.
    let fractions = characterization::state_fractions(jobs).unwrap();
    let sum: f64 = fractions.values().sum();
    assert!((sum - 1.0).abs() <= STATE_SUM_TOL, "state fractions sum to {sum}");

    println!(
        "criterion 9 PASS: cpu-hours drift {rel:.2e}, bins exact, resample drift \
         {resample_rel:.2e}, state fractions sum 1 ± {STATE_SUM_TOL:e}"
    );
}
