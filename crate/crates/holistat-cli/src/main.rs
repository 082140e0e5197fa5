mod commands;
mod error;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use holistat::correlation::CorrMethod;
use holistat::predictor::TrainConfig;
use holistat::TraceBundle;

use commands::{AnomalyOpts, CharacterizeOpts, CorrelateOpts, Out, PredictOpts, ReportOpts};
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "holistat",
    version,
    about = "Batch analysis of datacenter telemetry and job traces",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Metric CSV files (header: timestamp,node,metric,value).
    #[arg(long = "metrics", value_name = "FILE")]
    metrics: Vec<PathBuf>,
    /// Columnar trace as an alternative to --metrics.
    #[arg(long, value_name = "FILE", conflicts_with = "metrics")]
    hstrace: Option<PathBuf>,
    /// Job CSV (header: job_id,user_id,submit,start,end,cores,state,is_ml,nodes).
    #[arg(long, value_name = "FILE")]
    jobs: Option<PathBuf>,
    /// Inventory CSV (header: node,rack,cores,is_ml).
    #[arg(long, value_name = "FILE")]
    inventory: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; every random choice derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker pool size (HOLISTAT_WORKERS overrides; default 4).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct PredictArgs {
    /// Target node (default: first series).
    #[arg(long)]
    node: Option<String>,
    /// Target metric (default: first series).
    #[arg(long)]
    metric: Option<String>,
    /// Input granularities in seconds; each must divide the 2 h window.
    #[arg(long, value_delimiter = ',', default_values_t = [15u32, 60, 300, 600])]
    granularities: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    hidden_size: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    huber_delta: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Epochs without eval improvement before stopping.
    #[arg(long, default_value_t = 5)]
    patience: usize,
}

impl PredictArgs {
    fn to_opts(&self, seed: u64) -> PredictOpts {
        PredictOpts {
            node: self.node.clone(),
            metric: self.metric.clone(),
            granularities: self.granularities.clone(),
            config: TrainConfig {
                learning_rate: self.learning_rate,
                huber_delta: self.huber_delta,
                max_epochs: self.epochs,
                patience: self.patience,
                hidden_size: self.hidden_size,
                seed,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate input files, strip unusable data, and write the normalized bundle.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cleanup with an explicit window, rack exclusions, or a pivot split.
    Clean {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Keep samples and jobs at or after this epoch second.
        #[arg(long, requires = "window_end")]
        window_start: Option<i64>,
        /// Keep samples and jobs strictly before this epoch second.
        #[arg(long, requires = "window_start")]
        window_end: Option<i64>,
        /// Racks whose nodes are dropped (comma-separated rack ids).
        #[arg(long, value_delimiter = ',')]
        service_racks: Vec<String>,
        /// Optional epoch second to split the cleaned bundle at.
        #[arg(long)]
        pivot: Option<i64>,
    },
    /// Daily all-pairs correlation plus the cross-day persistence report.
    Correlate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// pearson, spearman, or kendall.
        #[arg(long, default_value = "spearman")]
        method: String,
        /// Signed coefficient threshold for a strong pair.
        #[arg(long, default_value_t = 0.9)]
        strong: f64,
        /// Pre-correlation resampling width in seconds (0 = raw grid).
        #[arg(long, default_value_t = 300)]
        resample: u32,
        /// Restrict to these UTC days (comma-separated YYYY-MM-DD).
        #[arg(long, value_delimiter = ',')]
        days: Vec<NaiveDate>,
        /// Drop first/last resampled bins that the raw span only grazes.
        #[arg(long)]
        drop_partial_bins: bool,
    },
    /// Moving z-score anomaly detection over the cleaned series.
    Anomaly {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Trailing window length in samples.
        #[arg(long, default_value_t = 240)]
        window: usize,
        /// Percentile of |z| that sets the flagging threshold.
        #[arg(long, default_value_t = 97.0)]
        percentile: f64,
        /// Restrict to one node.
        #[arg(long)]
        node: Option<String>,
        /// Restrict to one metric.
        #[arg(long)]
        metric: Option<String>,
        /// Pool |z| across all selected series instead of per series.
        #[arg(long)]
        global_threshold: bool,
        /// Seconds of slack when joining anomalies to job intervals.
        #[arg(long, default_value_t = 300)]
        join_slack: i64,
    },
    /// Workload and telemetry statistics: tables plus figures.
    Characterize {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Epoch second for a before/after comparison.
        #[arg(long)]
        pivot: Option<i64>,
        /// Metric rendered in the intensity heatmap.
        #[arg(long, default_value = "load1")]
        heatmap_metric: String,
    },
    /// LSTM granularity study on one series (runs on raw validated data).
    Predict {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        predict: PredictArgs,
    },
    /// Columnar encoding size and deflate compression across granularities.
    Storage {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [15u32, 60, 300, 600])]
        granularities: Vec<u32>,
        /// Deflate level 0..=9.
        #[arg(long, default_value_t = 6)]
        level: u32,
    },
    /// Generate a synthetic bundle with a ground-truth sidecar.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// demo, persistence, workload, granularity, storage-ar1, storage-iid.
        #[arg(long, default_value = "demo")]
        preset: String,
        /// Preset scale: total jobs (workload) or node count (storage-*).
        #[arg(long)]
        size: Option<u64>,
    },
    /// Run the whole pipeline into one directory with an index.
    Report {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "spearman")]
        method: String,
        #[arg(long, default_value_t = 0.9)]
        strong: f64,
        #[arg(long, default_value_t = 300)]
        resample: u32,
        #[arg(long, value_delimiter = ',')]
        days: Vec<NaiveDate>,
        #[arg(long, default_value_t = 240)]
        window: usize,
        #[arg(long, default_value_t = 97.0)]
        percentile: f64,
        #[arg(long)]
        pivot: Option<i64>,
        #[arg(long, default_value = "load1")]
        heatmap_metric: String,
        #[command(flatten)]
        predict: PredictArgs,
        /// Deflate level for the storage probe.
        #[arg(long, default_value_t = 6)]
        level: u32,
    },
}

fn parse_method(s: &str) -> Result<CorrMethod> {
    s.to_ascii_uppercase()
        .parse()
        .map_err(|_| CliError::Config(format!("unknown method {s:?}; expected pearson, spearman, or kendall")))
}

fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let workers = match std::env::var("HOLISTAT_WORKERS") {
        Ok(text) => text.parse::<usize>().map_err(|_| {
            CliError::Config(format!("HOLISTAT_WORKERS={text:?} is not a positive integer"))
        })?,
        Err(_) => flag.unwrap_or(4),
    };
    if workers == 0 {
        return Err(CliError::Config("worker count must be >= 1".into()));
    }
    Ok(workers)
}

fn load_bundle(input: &InputArgs) -> Result<TraceBundle> {
    let series = io::load_series(&input.metrics, input.hstrace.as_deref())?;
    let jobs = match &input.jobs {
        Some(path) => io::read_jobs(path)?,
        None => Vec::new(),
    };
    let inventory = match &input.inventory {
        Some(path) => io::read_inventory(path)?,
        None => Default::default(),
    };
    TraceBundle::new(series, jobs, inventory).map_err(CliError::from)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let common = match &cli.command {
        Command::Ingest { common, .. }
        | Command::Clean { common, .. }
        | Command::Correlate { common, .. }
        | Command::Anomaly { common, .. }
        | Command::Characterize { common, .. }
        | Command::Predict { common, .. }
        | Command::Storage { common, .. }
        | Command::Synth { common, .. }
        | Command::Report { common, .. } => common.clone(),
    };
    let workers = resolve_workers(common.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let mut out = Out::new(&common.out)?;

    pool.install(|| match cli.command {
        Command::Ingest { input, .. } => {
            let bundle = load_bundle(&input)?;
            commands::ingest(&mut out, &bundle)
        }
        Command::Clean { input, window_start, window_end, service_racks, pivot, .. } => {
            let bundle = load_bundle(&input)?;
            let window = match (window_start, window_end) {
                (Some(s), Some(e)) if s < e => Some((s, e)),
                (Some(s), Some(e)) => {
                    return Err(CliError::Config(format!("empty window [{s}, {e})")))
                }
                _ => None,
            };
            commands::clean(&mut out, &bundle, window, &service_racks, pivot)
        }
        Command::Correlate { input, method, strong, resample, days, drop_partial_bins, .. } => {
            let bundle = load_bundle(&input)?;
            let opts = CorrelateOpts {
                method: parse_method(&method)?,
                strong,
                resample_width: resample,
                days,
                drop_partial_bins,
            };
            commands::correlate(&mut out, &bundle, &opts)
        }
        Command::Anomaly {
            input,
            window,
            percentile,
            node,
            metric,
            global_threshold,
            join_slack,
            ..
        } => {
            let bundle = load_bundle(&input)?;
            let opts = AnomalyOpts {
                window,
                percentile,
                node,
                metric,
                global_threshold,
                join_slack,
            };
            commands::anomaly(&mut out, &bundle, &opts)
        }
        Command::Characterize { input, pivot, heatmap_metric, .. } => {
            let bundle = load_bundle(&input)?;
            commands::characterize(&mut out, &bundle, &CharacterizeOpts { pivot, heatmap_metric })
        }
        Command::Predict { input, predict, .. } => {
            let bundle = load_bundle(&input)?;
            commands::predict(&mut out, &bundle, &predict.to_opts(common.seed))
        }
        Command::Storage { input, granularities, level, .. } => {
            let bundle = load_bundle(&input)?;
            commands::storage(&mut out, &bundle, &granularities, level)
        }
        Command::Synth { preset, size, .. } => {
            commands::synth(&mut out, &preset, common.seed, size)
        }
        Command::Report {
            input,
            method,
            strong,
            resample,
            days,
            window,
            percentile,
            pivot,
            heatmap_metric,
            predict,
            level,
            ..
        } => {
            let bundle = load_bundle(&input)?;
            let opts = ReportOpts {
                correlate: CorrelateOpts {
                    method: parse_method(&method)?,
                    strong,
                    resample_width: resample,
                    days,
                    drop_partial_bins: false,
                },
                anomaly: AnomalyOpts {
                    window,
                    percentile,
                    node: None,
                    metric: None,
                    global_threshold: false,
                    join_slack: 300,
                },
                characterize: CharacterizeOpts { pivot, heatmap_metric },
                predict: predict.to_opts(common.seed),
                storage_granularities: predict.granularities.clone(),
                storage_level: level,
            };
            commands::report(&mut out, &bundle, &opts)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            e.emit();
            ExitCode::FAILURE
        }
    }
}
