//! Pearson, Spearman, and Kendall correlation with p-values, all-pairs
//! daily correlation over a trace bundle, cross-day persistence of strongly
//! correlated pairs, strength banding, and ordinary least squares.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::trace::{MetricSeries, SeriesKey, TraceBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorrMethod {
    Pearson,
    Spearman,
    Kendall,
}

impl CorrMethod {
    pub const ALL: [CorrMethod; 3] = [CorrMethod::Pearson, CorrMethod::Spearman, CorrMethod::Kendall];

    pub fn as_str(self) -> &'static str {
        match self {
            CorrMethod::Pearson => "PEARSON",
            CorrMethod::Spearman => "SPEARMAN",
            CorrMethod::Kendall => "KENDALL",
        }
    }
}

impl std::str::FromStr for CorrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PEARSON" => Ok(CorrMethod::Pearson),
            "SPEARMAN" => Ok(CorrMethod::Spearman),
            "KENDALL" => Ok(CorrMethod::Kendall),
            other => Err(Error::RejectedInput(format!("unknown correlation method {other:?}"))),
        }
    }
}

/// Coefficient, two-sided p-value, and sample count for one vector pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrStat {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One correlation between two series on one day slice. Keys are stored
/// with `metric_a < metric_b` so the pair identity is canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub metric_a: SeriesKey,
    pub metric_b: SeriesKey,
    pub method: CorrMethod,
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "correlation inputs of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::RejectedInput(format!(
            "correlation needs at least 3 aligned samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in correlation input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a.to_bits() == v[0].to_bits());
    if constant(x) || constant(y) {
        return Err(Error::DegenerateInput(
            "constant input to correlation; cleanup should have removed it".into(),
        ));
    }
    Ok(())
}

fn two_sided_t_p(t: f64, dof: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof).expect("degrees of freedom >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn two_sided_normal_p(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    let dist = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * dist.sf(z.abs())).clamp(0.0, 1.0)
}

/// Average ranks, 1-based; tied values share the mean of the ranks they span.
pub fn rank_with_ties(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::RejectedInput("ranking of empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in ranking input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold ranks i+1..=j+1; tied values get the mean.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Sample Pearson correlation with a two-sided p-value from the t statistic
/// `t = r * sqrt((n-2)/(1-r^2))` against Student's t with n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrStat> {
    check_pair(x, y)?;
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // sqrt(sxx*syy) rather than sqrt(sxx)*sqrt(syy): the former returns
    // exactly sxx when sxx == syy, so r = +/-1 is exact for x = a*y + b.
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let dof = (n - 2) as f64;
        let t = r * (dof / (1.0 - r * r)).sqrt();
        two_sided_t_p(t, dof)
    };
    Ok(CorrStat { coefficient: r, p_value: p, n })
}

/// Spearman rank correlation: Pearson applied to average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrStat> {
    check_pair(x, y)?;
    let rx = rank_with_ties(x)?;
    let ry = rank_with_ties(y)?;
    pearson(&rx, &ry)
}

/// Per-variable tie statistics over a sorted slice of keys:
/// `(sum t(t-1)/2, sum t(t-1)(t-2), sum t(t-1)(2t+5))` over tie groups.
fn tie_stats<T: PartialEq>(sorted: &[T]) -> (u64, u64, u64) {
    let (mut tie, mut v0, mut v1) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as u64;
        tie += t * (t - 1) / 2;
        v0 += t * (t - 1) * (t.saturating_sub(2));
        v1 += t * (t - 1) * (2 * t + 5);
        i = j + 1;
    }
    (tie, v0, v1)
}

/// Counts strict inversions in `values` while merge sorting it in place.
fn count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mut buf = values.to_vec();
    merge_count(values, &mut buf)
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left_buf, right_buf) = buf.split_at_mut(mid);
    let mut inv = {
        let (left, right) = v.split_at_mut(mid);
        merge_count(left, left_buf) + merge_count(right, right_buf)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    let filled = k + (mid - i);
    v[..filled].copy_from_slice(&buf[..filled]);
    inv
}

/// Kendall tau-b with tie corrections, computed in O(n log n) via a
/// lexicographic sort plus inversion counting. The p-value uses the normal
/// approximation of the concordant-minus-discordant statistic with the
/// standard tie-corrected variance.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<CorrStat> {
    check_pair(x, y)?;
    let n = x.len();

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));

    let (joint_tie, _, _) = tie_stats(&pairs);
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (xtie, x0, x1) = tie_stats(&xs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let dis = count_inversions(&mut ys);
    let (ytie, y0, y1) = tie_stats(&ys);

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if xtie == n0 || ytie == n0 {
        return Err(Error::DegenerateInput(
            "constant input to correlation; cleanup should have removed it".into(),
        ));
    }
    let con_minus_dis = n0 as i64 - xtie as i64 - ytie as i64 + joint_tie as i64 - 2 * dis as i64;
    let denom = ((n0 - xtie) as f64).sqrt() * ((n0 - ytie) as f64).sqrt();
    let tau = (con_minus_dis as f64 / denom).clamp(-1.0, 1.0);

    let nf = n as f64;
    let m = nf * (nf - 1.0);
    let mut var = (m * (2.0 * nf + 5.0) - x1 as f64 - y1 as f64) / 18.0
        + (2.0 * xtie as f64 * ytie as f64) / m;
    if n > 2 {
        var += (x0 as f64 * y0 as f64) / (9.0 * m * (nf - 2.0));
    }
    let p = if var > 0.0 { two_sided_normal_p(con_minus_dis as f64 / var.sqrt()) } else { 1.0 };
    Ok(CorrStat { coefficient: tau, p_value: p, n })
}

pub fn correlate(x: &[f64], y: &[f64], method: CorrMethod) -> Result<CorrStat> {
    match method {
        CorrMethod::Pearson => pearson(x, y),
        CorrMethod::Spearman => spearman(x, y),
        CorrMethod::Kendall => kendall(x, y),
    }
}

/// Values at timestamps where both series have a present sample.
pub fn align_pair(a: &MetricSeries, b: &MetricSeries) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ia = a.samples.iter().filter_map(|s| s.value.map(|v| (s.timestamp, v))).peekable();
    let mut ib = b.samples.iter().filter_map(|s| s.value.map(|v| (s.timestamp, v))).peekable();
    while let (Some(&(ta, va)), Some(&(tb, vb))) = (ia.peek(), ib.peek()) {
        match ta.cmp(&tb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                xs.push(va);
                ys.push(vb);
                ia.next();
                ib.next();
            }
        }
    }
    (xs, ys)
}

/// Why pairs were left out of an all-pairs run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSkipReport {
    pub computed: u64,
    /// Pairs with fewer than 3 timestamps where both sides are present.
    pub skipped_short: u64,
    /// Pairs where at least one side is constant after alignment.
    pub skipped_constant: u64,
}

/// Correlates every unordered pair of series in the bundle, aligning on
/// shared present timestamps. Pairs with fewer than 3 aligned samples or a
/// constant side are skipped and counted. Output is ordered by pair key.
pub fn all_pairs(
    bundle: &TraceBundle,
    method: CorrMethod,
) -> Result<(Vec<CorrelationResult>, PairSkipReport)> {
    let series = bundle.series();
    let mut results = Vec::new();
    let mut report = PairSkipReport::default();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            match pair_result(&series[i], &series[j], method)? {
                PairOutcome::Ok(r) => {
                    report.computed += 1;
                    results.push(r);
                }
                PairOutcome::Short => report.skipped_short += 1,
                PairOutcome::Constant => report.skipped_constant += 1,
            }
        }
    }
    Ok((results, report))
}

pub(crate) enum PairOutcome {
    Ok(CorrelationResult),
    Short,
    Constant,
}

pub(crate) fn pair_result(
    a: &MetricSeries,
    b: &MetricSeries,
    method: CorrMethod,
) -> Result<PairOutcome> {
    let (xs, ys) = align_pair(a, b);
    match correlate(&xs, &ys, method) {
        Ok(stat) => Ok(PairOutcome::Ok(CorrelationResult {
            metric_a: a.key(),
            metric_b: b.key(),
            method,
            coefficient: stat.coefficient,
            p_value: stat.p_value,
            n: stat.n,
        })),
        Err(Error::RejectedInput(_)) | Err(Error::ShapeMismatch(_)) => Ok(PairOutcome::Short),
        Err(Error::DegenerateInput(_)) => Ok(PairOutcome::Constant),
        Err(e) => Err(e),
    }
}

/// The pairs that reached `threshold` on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyPairSet {
    pub day: NaiveDate,
    pub strong_pairs: BTreeSet<(SeriesKey, SeriesKey)>,
}

impl DailyPairSet {
    /// Collects the pairs whose coefficient is at or above `threshold`
    /// (signed comparison: the convention counts strong positive association).
    pub fn from_results(day: NaiveDate, results: &[CorrelationResult], threshold: f64) -> Self {
        let strong_pairs = results
            .iter()
            .filter(|r| r.coefficient >= threshold)
            .map(|r| (r.metric_a.clone(), r.metric_b.clone()))
            .collect();
        DailyPairSet { day, strong_pairs }
    }
}

/// Per-day strong-pair counts plus the set of pairs strong on every day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub per_day: Vec<(NaiveDate, usize)>,
    pub persistent: BTreeSet<(SeriesKey, SeriesKey)>,
}

pub fn persistent_pairs(daily: &[DailyPairSet]) -> Result<PersistenceReport> {
    let Some(first) = daily.first() else {
        return Err(Error::RejectedInput("persistence over zero days".into()));
    };
    let per_day = daily.iter().map(|d| (d.day, d.strong_pairs.len())).collect();
    let mut persistent = first.strong_pairs.clone();
    for d in &daily[1..] {
        persistent.retain(|p| d.strong_pairs.contains(p));
    }
    Ok(PersistenceReport { per_day, persistent })
}

/// Absolute-coefficient cutoffs between adjacent strength bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthBands {
    pub very_strong: f64,
    pub strong: f64,
    pub moderate: f64,
    pub weak: f64,
}

impl Default for StrengthBands {
    fn default() -> Self {
        StrengthBands { very_strong: 0.9, strong: 0.7, moderate: 0.4, weak: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthLabel {
    Negligible,
    Weak,
    Moderate,
    Strong,
    VeryStrong,
}

impl StrengthLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StrengthLabel::Negligible => "negligible",
            StrengthLabel::Weak => "weak",
            StrengthLabel::Moderate => "moderate",
            StrengthLabel::Strong => "strong",
            StrengthLabel::VeryStrong => "very strong",
        }
    }
}

/// Bands a coefficient by absolute value: at or above `very_strong` is
/// "very strong", and so on down to "negligible" below `weak`.
pub fn classify_strength(coefficient: f64, bands: &StrengthBands) -> StrengthLabel {
    let c = coefficient.abs();
    if c >= bands.very_strong {
        StrengthLabel::VeryStrong
    } else if c >= bands.strong {
        StrengthLabel::Strong
    } else if c >= bands.moderate {
        StrengthLabel::Moderate
    } else if c >= bands.weak {
        StrengthLabel::Weak
    } else {
        StrengthLabel::Negligible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line `y = slope*x + intercept`. A zero-residual fit
/// (including a constant y) reports `r_squared = 1`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "regression inputs of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::RejectedInput(format!(
            "regression needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::RejectedInput("non-finite value in regression input".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("constant x in regression".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..x.len() {
        let e = y[i] - (slope * x[i] + intercept);
        ss_res += e * e;
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    let r_squared = if ss_res == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(OlsFit { slope, intercept, r_squared })
}

/// UTC calendar day containing an epoch timestamp.
pub fn utc_day(timestamp: i64) -> NaiveDate {
    chrono::DateTime::from_timestamp(timestamp, 0)
        .expect("timestamp in chrono range")
        .date_naive()
}

/// Epoch-second bounds `[start, end)` of a UTC calendar day.
pub fn day_bounds(day: NaiveDate) -> (i64, i64) {
    let start = day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp();
    (start, start + 86_400)
}

/// UTC days covered by any sample in the bundle, ascending.
pub fn days_covered(bundle: &TraceBundle) -> Vec<NaiveDate> {
    let Some((lo, hi)) = bundle.time_span() else { return Vec::new() };
    let mut days = Vec::new();
    let mut d = utc_day(lo);
    let last = utc_day(hi);
    while d <= last {
        days.push(d);
        d = d.succ_opt().expect("date in range");
    }
    days
}

/// The bundle restricted to one UTC day (series sliced; jobs kept if they
/// start inside the day).
pub fn day_slice(bundle: &TraceBundle, day: NaiveDate) -> Result<TraceBundle> {
    let (t0, t1) = day_bounds(day);
    let series = bundle
        .series()
        .iter()
        .map(|s| s.slice(t0, t1))
        .filter(|s| !s.is_empty())
        .collect();
    let jobs = bundle
        .jobs()
        .iter()
        .filter(|j| j.start_time >= t0 && j.start_time < t1)
        .cloned()
        .collect();
    TraceBundle::new(series, jobs, bundle.inventory().clone())
}
