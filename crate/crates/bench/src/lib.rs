//! Demorphing benchmark harness: baseline demorphers, the evaluation
//! pipeline, report emission and the identity/quality sanity sweep.

pub mod demorpher;
pub mod embedder;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod sanity;
pub mod synth;

pub use error::{HarnessError, Result};
pub use pipeline::{run_evaluation, EvaluationConfig, EvaluationRun, RecordOutcome};
pub use report::{MetricsReport, ReportFormat};
