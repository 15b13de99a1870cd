//! Downstream evaluation: accuracy, equalized-odds gaps and the worst-case residual audit.

mod audit;
mod eod;
mod report;

pub use audit::{residual_audit, write_audit_csv, AuditReport, AuditRow, ModeSummary};
pub use eod::{compute_eod, count_cells, CellCounts, EodResult};
pub use report::{
    eval_distilled, evaluate_predictor, summarize, write_eval_csv, write_seed_csv, EvalKey, EvalReport, EvalSettings,
    MetricSummary, Predictor, SeedMetrics,
};
