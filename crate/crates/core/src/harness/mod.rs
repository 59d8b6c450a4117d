//! Experiment harness: configuration, metrics, training phases and plots.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod phases;
pub mod plot;
pub mod rng;
pub mod run;

pub use config::{Algorithm, Preset, RunConfig};
pub use eval::{evaluate, EvalStats};
pub use metrics::{read_metrics, success_auc, write_metrics, MetricsRow, METRICS_COLUMNS};
pub use rng::{restore_rng, stream_rng, Stream};
pub use run::{OnlineRun, OnlineSources};
