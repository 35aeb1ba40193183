//! Depth metrics, checkpoint evaluation, and model complexity accounting.

pub mod complexity;
pub mod harness;
pub mod metrics;

pub use complexity::{count_parameters, estimate_flops, ComplexityReport, Trace, Tracer};
pub use harness::{
    evaluate_checkpoint, evaluate_predictions, evaluate_triplets, resize_depth, ComplexitySummary,
    DepthPredictor, EvalReport, EvalSummary,
};
pub use metrics::{compute_metrics, DepthMetrics, EvalCrop, EvalProtocol};
