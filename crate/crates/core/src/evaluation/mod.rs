//! Benchmark statistics: rank correlations against subjective scores,
//! logistic fitting, residual F-tests and report generation.

mod benchmark;
mod correlation;
mod ftest;
mod logistic;
mod metrics;

pub use benchmark::{
    read_benchmark_csv, run_benchmark, BenchmarkConfig, BenchmarkEntry, CorrelationReport, MetricReport,
    QuarantinedMetric,
};
pub use correlation::{average_ranks, krcc, pearson, srocc};
pub use ftest::{f_critical, f_test, f_test_detail, FTestResult};
pub use logistic::{logistic4, logistic_fit, FitKind, LogisticFit};
pub use metrics::{
    nr_difference_adapter, FrMetric, FrPlugin, MeanLuma, MetricPolarity, MetricSpec, ModelMetric, NrDifference,
    NrMetric, NrPlugin, Psnr, Ssim, VideoInput,
};
