//! Evaluation reports, report comparison, the gradient-check suite and the
//! command-line entry point.

pub mod cli;
mod compare;
pub mod gradcheck;
mod report;

pub use compare::{compare, Comparison, COMPARE_HEADER};
pub use report::{
    dataset_id, evaluate, evaluate_predictions, EvalReport, PredictionRecord, ReportSummary,
    CONFUSION3_CSV, CONFUSION7_CSV, PREDICTIONS_CSV, REPORT_CSV, REPORT_HEADER, REPORT_TXT,
};
