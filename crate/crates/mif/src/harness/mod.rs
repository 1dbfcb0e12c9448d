//! Execution loop, experiment suites (adaptation comparison, threshold
//! sweep), and metrics emission.

mod metrics;
mod run;
mod suite;


pub use metrics::{emit_metrics, parse_metrics, report_line, round_sig9, sig9};
pub use run::{run_task, run_task_with_limits, stored_graph, RunLimits};
pub use suite::{
    eval_adaptation, generate_scenario_doc, generate_suite, generate_sweep_suite, sweep_tau,
    AdaptationRow, ChangeKind, TauRow,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ips::{IpsDiagnostics, StancePose};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("suite contains no scenarios")]
    EmptySuite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metrics document invalid: {0}")]
    Metrics(String),
}

/// Memory handling policy for a task run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    /// Act on the stored graph only; never observe, never patch.
    Static,
    /// Observe locally (live detections refine the final approach) but never
    /// patch the stored graph.
    Initial,
    /// Discrepancy-triggered patching of the stored graph.
    Full,
}

impl std::fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MemoryMode::Static => "static",
            MemoryMode::Initial => "initial",
            MemoryMode::Full => "full",
        })
    }
}

impl std::str::FromStr for MemoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(MemoryMode::Static),
            "initial" => Ok(MemoryMode::Initial),
            "full" => Ok(MemoryMode::Full),
            other => Err(format!("unknown memory mode \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Success,
    Failure,
    RemovedReport,
}

/// Full record of one task run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub scenario_seed: u64,
    pub mode: MemoryMode,
    pub outcome: OutcomeKind,
    /// Ground-truth adjudication verdict.
    pub success: bool,
    pub reason: String,
    pub ticks: u64,
    pub d_trace: Vec<(u64, f64)>,
    pub updates_triggered: u32,
    pub final_stance: Option<StancePose>,
    pub ips_diag: Option<IpsDiagnostics>,
    pub path_length: f64,
}
