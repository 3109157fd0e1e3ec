//! Benchmark harness: baselines, offline agents, batch runner and metrics.

pub mod agents;
pub mod baselines;
pub mod metrics;
pub mod runner;

pub use metrics::{compute_metrics, write_csvs, GroupMetrics, MetricsSummary, Stats};
pub use runner::{
    build_gateway, read_records, run_benchmark, run_benchmark_with, run_cell, BackendConfig,
    BenchConfig, BenchError, CellSettings, Method, RunRecord,
};
