//! Run orchestration: configuration, checkpoints, metrics and the
//! end-to-end pipeline.

pub mod bundle;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod pipeline;

pub use bundle::Bundle;
pub use config::Config;
pub use evaluate::{
    delta_grid, interpolate_map, write_tradeoff_csv, DistanceTable, Ranker, Retrieval, SweepSpec, TradeoffReport,
    TradeoffRow,
};
pub use metrics::{average_precision, mean_average_precision};
pub use pipeline::{run_pipeline, run_pipeline_with, strategies, Artifacts, Prepared, RunLog, STAGES};
