//! Analysis library for datacenter monitoring traces: cleanup, correlation
//! mining, statistical characterization, anomaly detection, a small LSTM
//! forecasting study, columnar storage, and a deterministic synthetic trace
//! generator.

pub mod anomaly;
pub mod characterization;
pub mod cleanup;
pub mod correlation;
pub mod error;
pub mod predictor;
pub mod stats;
pub mod storage;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{
    IntensityClass, JobRecord, JobState, MetricSeries, NodeInfo, Sample, SeriesKey, TraceBundle,
};
