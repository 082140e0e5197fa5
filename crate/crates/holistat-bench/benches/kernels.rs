use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use holistat::anomaly::moving_zscore;
use holistat::correlation::{self, all_pairs, CorrMethod};
use holistat::predictor::{LstmModel, WindowSample, TARGET_STEPS};
use holistat::storage::{decode_columnar, encode_columnar, Codec, DeflateCodec};
use holistat::synth::{gen_bundle, presets};
use holistat::trace::{resample, MetricSeries, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ar1(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = 0.99 * x + rng.random_range(-0.05..0.05);
            x
        })
        .collect()
}

fn series(seed: u64, n: usize) -> MetricSeries {
    let samples = ar1(seed, n)
        .into_iter()
        .enumerate()
        .map(|(i, v)| Sample::present(i as i64 * 15, 0.45 + v))
        .collect();
    MetricSeries::new("bench-00", "load1", 15, samples).expect("valid series")
}

// Sizes mirror real slices: one day in 300 s bins, one raw day, eight raw
// days of 15 s telemetry.
fn coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("coefficient");
    for n in [288usize, 5_760, 46_080] {
        let x = ar1(1, n);
        let y: Vec<f64> = x.iter().zip(ar1(2, n)).map(|(a, b)| 0.7 * a + 0.3 * b).collect();
        group.throughput(Throughput::Elements(n as u64));
        for method in [CorrMethod::Pearson, CorrMethod::Spearman, CorrMethod::Kendall] {
            group.bench_with_input(BenchmarkId::new(method.as_str(), n), &n, |b, _| {
                b.iter(|| correlation::correlate(black_box(&x), black_box(&y), method).unwrap());
            });
        }
    }
    group.finish();
}

fn all_pairs_day(c: &mut Criterion) {
    let (bundle, _) = gen_bundle(&presets::demo(7)).expect("demo preset");
    let day = correlation::days_covered(&bundle)[0];
    let slice = correlation::day_slice(&bundle, day).expect("day slice");
    let k = slice.series().len() as u64;

    let mut group = c.benchmark_group("all_pairs_day");
    group.sample_size(20);
    group.throughput(Throughput::Elements(k * (k - 1) / 2));
    for method in [CorrMethod::Pearson, CorrMethod::Spearman] {
        group.bench_function(method.as_str(), |b| {
            b.iter(|| all_pairs(black_box(&slice), method).unwrap());
        });
    }
    group.finish();
}

fn zscore(c: &mut Criterion) {
    let mut group = c.benchmark_group("moving_zscore");
    for n in [5_760usize, 40_320] {
        let s = series(3, n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| moving_zscore(black_box(&s), 240).unwrap());
        });
    }
    group.finish();
}

fn resample_day(c: &mut Criterion) {
    let s = series(4, 5_760);
    let mut group = c.benchmark_group("resample");
    group.throughput(Throughput::Elements(s.len() as u64));
    for width in [60u32, 300, 3_600] {
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, &w| {
            b.iter(|| resample(black_box(&s), w).unwrap());
        });
    }
    group.finish();
}

fn window(seed: u64, steps: usize) -> WindowSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WindowSample {
        inputs: (0..steps).map(|_| vec![rng.random_range(0.0..1.0)]).collect(),
        target: (0..TARGET_STEPS).map(|_| rng.random_range(0.0..1.0)).collect(),
    }
}

// Input step counts for a two-hour span at 60 s, 300 s, and 600 s.
fn lstm(c: &mut Criterion) {
    let model = LstmModel::init(1, 32, TARGET_STEPS, 7);
    let mut group = c.benchmark_group("lstm");
    for steps in [120usize, 24, 12] {
        let w = window(9, steps);
        group.throughput(Throughput::Elements(steps as u64));
        group.bench_with_input(BenchmarkId::new("forward", steps), &steps, |b, _| {
            b.iter(|| model.forward(black_box(&w.inputs)).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("gradient", steps), &steps, |b, _| {
            b.iter(|| model.gradient(black_box(&w), 1.0).unwrap());
        });
    }
    group.finish();
}

fn storage(c: &mut Criterion) {
    let (bundle, _) = gen_bundle(&presets::storage_ar1(3, 4)).expect("storage preset");
    let encoded = encode_columnar(bundle.series()).expect("encode");

    let mut group = c.benchmark_group("storage");
    group.throughput(Throughput::Bytes(encoded.len() as u64));
    group.bench_function("encode_columnar", |b| {
        b.iter(|| encode_columnar(black_box(bundle.series())).unwrap());
    });
    group.bench_function("decode_columnar", |b| {
        b.iter(|| decode_columnar(black_box(&encoded)).unwrap());
    });
    for level in [1u32, 6, 9] {
        let codec = DeflateCodec { level };
        group.bench_with_input(BenchmarkId::new("deflate", level), &level, |b, _| {
            b.iter(|| codec.compress(black_box(&encoded)));
        });
    }
    group.finish();
}

criterion_group!(
    kernels,
    coefficients,
    all_pairs_day,
    zscore,
    resample_day,
    lstm,
    storage
);
criterion_main!(kernels);
