//! Experiment suites: deterministic scenario generation per change type, the
//! discrepancy-threshold sweep, and the memory-mode adaptation comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simworld::{
    build_scenario, EventSpec, ObjectSpec, ParamsSpec, PoseSpec, QuerySpec, RobotSpec, RoomSpec,
    Scenario, ScenarioDoc,
};

use super::{run_task, HarnessError, MemoryMode, TaskReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Relocate,
    Remove,
    Add,
    Unchanged,
}

impl std::fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChangeKind::Relocate => "relocate",
            ChangeKind::Remove => "remove",
            ChangeKind::Add => "add",
            ChangeKind::Unchanged => "unchanged",
        })
    }
}

impl std::str::FromStr for ChangeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relocate" => Ok(ChangeKind::Relocate),
            "remove" => Ok(ChangeKind::Remove),
            "add" => Ok(ChangeKind::Add),
            "unchanged" => Ok(ChangeKind::Unchanged),
            other => Err(format!("unknown change kind \"{other}\"")),
        }
    }
}

fn mix(base: u64, kind: u64, index: u64) -> u64 {
    let mut x = base ^ kind.rotate_left(17) ^ index.rotate_left(39);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

const RELOCATION_OFFSETS: [(f64, f64); 4] =
    [(-3.0, 2.0), (-4.0, -1.0), (-2.5, -2.0), (-3.5, 1.5)];
const LAMP_SPOTS: [(f64, f64); 4] = [(7.0, 7.0), (4.0, 6.0), (8.0, 3.0), (5.0, 7.0)];

/// One desk-scale scenario: a 12x10 room with three furnished objects, the
/// scripted change selected by `kind`, and a query grounding the task target.
pub fn generate_scenario_doc(kind: ChangeKind, index: u64, base_seed: u64) -> ScenarioDoc {
    let seed = mix(base_seed, kind as u64, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jx = rng.gen_range(-0.4..0.4);
    let jy = rng.gen_range(-0.4..0.4);
    let crate_pos = [9.0 + jx, 5.0 + jy, 0.0];

    let object = |id: u64, category: &str, pos: [f64; 3], mesh: &str, height: f64| ObjectSpec {
        id,
        category: category.to_string(),
        room: "hall".to_string(),
        pose: PoseSpec {
            position: pos,
            yaw: 0.0,
        },
        mesh: mesh.to_string(),
        height,
    };

    let objects = vec![
        object(1, "crate", crate_pos, "box:0.5,0.5,0.9", 0.9),
        object(2, "plant", [3.0, 8.0, 0.0], "cyl:0.25,1.1", 1.1),
        object(3, "bench", [6.0, 2.0, 0.0], "box:1.2,0.4,0.5", 0.5),
    ];
    let mut events = Vec::new();
    let mut query_object = "crate";

    match kind {
        ChangeKind::Relocate => {
            let (dx, dy) = RELOCATION_OFFSETS[rng.gen_range(0..RELOCATION_OFFSETS.len())];
            events.push(EventSpec {
                tick: 25,
                kind: "relocate".to_string(),
                object_id: Some(1),
                new_pose: Some(PoseSpec {
                    position: [
                        (crate_pos[0] + dx).clamp(1.0, 11.0),
                        (crate_pos[1] + dy).clamp(1.0, 9.0),
                        0.0,
                    ],
                    yaw: 0.0,
                }),
                object: None,
            });
        }
        ChangeKind::Remove => {
            events.push(EventSpec {
                tick: 25,
                kind: "remove".to_string(),
                object_id: Some(1),
                new_pose: None,
                object: None,
            });
        }
        ChangeKind::Add => {
            let (lx, ly) = LAMP_SPOTS[rng.gen_range(0..LAMP_SPOTS.len())];
            let lamp = object(
                7,
                "lamp",
                [
                    lx + rng.gen_range(-0.3..0.3),
                    ly + rng.gen_range(-0.3..0.3),
                    0.0,
                ],
                "cyl:0.15,0.8",
                0.8,
            );
            events.push(EventSpec {
                tick: 10,
                kind: "add".to_string(),
                object_id: None,
                new_pose: None,
                object: Some(lamp),
            });
            query_object = "lamp";
        }
        ChangeKind::Unchanged => {}
    }

    ScenarioDoc {
        seed,
        rooms: vec![RoomSpec {
            name: "hall".to_string(),
            polygon: vec![[0.0, 0.0], [12.0, 0.0], [12.0, 10.0], [0.0, 10.0]],
        }],
        objects,
        events,
        robot: RobotSpec {
            start: [1.0, 1.0, 0.5],
            ..RobotSpec::default()
        },
        query: QuerySpec {
            region: "hall".to_string(),
            landmark: String::new(),
            object: query_object.to_string(),
        },
        params: ParamsSpec::default(),
    }
}

/// Builds `n` loaded scenarios of one change type.
pub fn generate_suite(
    kind: ChangeKind,
    n: usize,
    base_seed: u64,
) -> Result<Vec<Scenario>, crate::simworld::ScenarioError> {
    (0..n as u64)
        .map(|i| build_scenario(&generate_scenario_doc(kind, i, base_seed), None))
        .collect()
}

/// Labeled suite for the threshold sweep: half changed (target relocation),
/// half unchanged under elevated gait noise.
pub fn generate_sweep_suite(
    n: usize,
    base_seed: u64,
) -> Result<Vec<(Scenario, bool)>, crate::simworld::ScenarioError> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let changed = i % 2 == 0;
        let mut doc = if changed {
            generate_scenario_doc(ChangeKind::Relocate, i, base_seed)
        } else {
            let mut doc = generate_scenario_doc(ChangeKind::Unchanged, i, base_seed);
            let mut jitter = crate::simworld::JitterModel::default();
            jitter.amp0 = 0.08;
            jitter.p_spurious = 0.3;
            doc.params.jitter = Some(jitter);
            doc
        };
        doc.params.jitter.get_or_insert_with(Default::default).noise_seed = mix(base_seed, 99, i);
        out.push((build_scenario(&doc, None)?, changed));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub tau: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
}

/// True when the trace holds `persistence` consecutive samples above `tau`.
fn triggers(trace: &[(u64, f64)], tau: f64, persistence: usize) -> bool {
    trace
        .windows(persistence.max(1))
        .any(|w| w.iter().all(|(_, d)| *d > tau))
}

/// Computes trigger TPR/FPR/F1 per threshold from fixed monitoring traces
/// (runs observe but never patch, so one trace serves every threshold).
pub fn sweep_tau(
    suite: &[(Scenario, bool)],
    taus: &[f64],
) -> Result<Vec<TauRow>, HarnessError> {
    if suite.is_empty() || taus.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let traces: Vec<(Vec<(u64, f64)>, bool, usize)> = suite
        .iter()
        .map(|(s, changed)| {
            let report = run_task(s, MemoryMode::Initial);
            let persistence = s.params.discrepancy.persistence_ticks as usize;
            (report.d_trace, *changed, persistence)
        })
        .collect();

    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let (mut tp, mut fp, mut fnn, mut tn) = (0usize, 0usize, 0usize, 0usize);
        for (trace, changed, persistence) in &traces {
            let fired = triggers(trace, tau, *persistence);
            match (changed, fired) {
                (true, true) => tp += 1,
                (true, false) => fnn += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
        let tpr = tp as f64 / (tp + fnn).max(1) as f64;
        let fpr = fp as f64 / (fp + tn).max(1) as f64;
        let f1 = if 2 * tp + fp + fnn == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
        };
        rows.push(TauRow { tau, tpr, fpr, f1 });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptationRow {
    pub change: ChangeKind,
    pub mode: MemoryMode,
    pub n: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Success-rate table across change types and memory modes, with normal
/// binomial 95% intervals. Also returns every task report for emission.
pub fn eval_adaptation(
    suites: &[(ChangeKind, Vec<Scenario>)],
    modes: &[MemoryMode],
) -> Result<(Vec<AdaptationRow>, Vec<TaskReport>), HarnessError> {
    if suites.is_empty() || suites.iter().all(|(_, s)| s.is_empty()) || modes.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (change, scenarios) in suites {
        for &mode in modes {
            let mut successes = 0usize;
            for scenario in scenarios {
                let report = run_task(scenario, mode);
                if report.success {
                    successes += 1;
                }
                reports.push(report);
            }
            let n = scenarios.len();
            let rate = successes as f64 / n.max(1) as f64;
            let half = 1.96 * (rate * (1.0 - rate) / n.max(1) as f64).sqrt();
            rows.push(AdaptationRow {
                change: *change,
                mode,
                n,
                successes,
                rate,
                ci_low: (rate - half).max(0.0),
                ci_high: (rate + half).min(1.0),
            });
        }
    }
    Ok((rows, reports))
}
