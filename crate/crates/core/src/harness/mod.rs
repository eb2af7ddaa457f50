//! Run configuration, metrics logging, checkpoints, comparisons and plots.

mod checkpoint;
mod compare;
mod config;
mod metrics;
mod plots;
mod run;

pub use checkpoint::{
    decode, encode, latest_checkpoint, load_checkpoint, save_checkpoint, write_checkpoint, RunCounters, BLOB_FILE,
    BLOB_MAGIC, MANIFEST_FILE, MANIFEST_MAGIC,
};
pub use compare::{compare, diverged, load_run, smooth, stability, Comparison, ComparisonEntry, RunSummary};
pub use config::{ExperimentConfig, KEYS};
pub use metrics::{
    format_eval, format_row, metrics_csv, parse_eval_csv, parse_metrics_csv, EvalPoint, EVAL_HEADER, METRICS_HEADER,
};
pub use plots::{axis_ranges, emit_plots, line_chart, Series};
pub use run::{
    eval_rng, evaluate_run, load_run_config, prepare_data, resume, run, summary_text, PreparedData, RunRecord,
    CONFIG_FILE, EVAL_FILE, METRICS_FILE, SUMMARY_FILE,
};
