//! Metrics emission: one JSON document per run plus a flat CSV aggregate.
//! All numbers are rounded to 9 significant digits so identical runs emit
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use super::{HarnessError, TaskReport};

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap()
}

/// Canonical 9-significant-digit decimal text for a float.
pub fn sig9(x: f64) -> String {
    let r = round_sig9(x);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig9(f)) {
                        *n = rounded;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_value),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes one report as a single JSON line with rounded numbers.
pub fn report_line(report: &TaskReport) -> String {
    let mut value = serde_json::to_value(report).expect("reports always serialize");
    round_value(&mut value);
    serde_json::to_string(&value).expect("values always serialize")
}

/// Parses one emitted line back into a report.
pub fn parse_metrics(line: &str) -> Result<TaskReport, HarnessError> {
    serde_json::from_str(line).map_err(|e| HarnessError::Metrics(e.to_string()))
}

fn aggregate_row(index: usize, r: &TaskReport) -> String {
    let mean_d = if r.d_trace.is_empty() {
        0.0
    } else {
        r.d_trace.iter().map(|(_, d)| d).sum::<f64>() / r.d_trace.len() as f64
    };
    let max_d = r.d_trace.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let outcome = match r.outcome {
        super::OutcomeKind::Success => "success",
        super::OutcomeKind::Failure => "failure",
        super::OutcomeKind::RemovedReport => "removed-report",
    };
    format!(
        "{index},{seed},{mode},{outcome},{success},{ticks},{updates},{plen},{mean},{max}",
        seed = r.scenario_seed,
        mode = r.mode,
        success = r.success,
        ticks = r.ticks,
        updates = r.updates_triggered,
        plen = sig9(r.path_length),
        mean = sig9(mean_d),
        max = sig9(max_d),
    )
}

/// Writes `runs.jsonl` (one document per run) and `aggregate.csv` into
/// `out_dir`.
pub fn emit_metrics(reports: &[TaskReport], out_dir: &Path) -> Result<(), HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Metrics("no reports to emit".to_string()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut jsonl = std::fs::File::create(out_dir.join("runs.jsonl"))?;
    for r in reports {
        writeln!(jsonl, "{}", report_line(r))?;
    }

    let mut csv = std::fs::File::create(out_dir.join("aggregate.csv"))?;
    writeln!(
        csv,
        "run,scenario_seed,mode,outcome,success,ticks,updates_triggered,path_length_m,mean_d,max_d"
    )?;
    for (i, r) in reports.iter().enumerate() {
        writeln!(csv, "{}", aggregate_row(i, r))?;
    }
    Ok(())
}
