//! Metrics, FLOPs accounting and the benchmark harness.

mod harness;
pub mod metrics;

pub use harness::{
    graph_file_name, histogram_csv, load_dataset, run_benchmark, run_sweep, sweep_csv, Aggregates, EvalError, EvalExample, EvalReport,
    ExampleResult, GraphStore, HistogramBin, ReportMeta, SkippedExample, SweepParam, SweepRow,
};
pub use metrics::{normalize_answer, rouge_l, token_f1};

/// Estimated TFLOPs: `2 * params * Σ tokens / 1e12`, ignoring the quadratic
/// attention term.
pub fn flops_estimate(ledger: &[u64], model_params: f64) -> f64 {
    let tokens: u64 = ledger.iter().sum();
    2.0 * model_params * tokens as f64 / 1e12
}
