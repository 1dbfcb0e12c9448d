//! `mif`: scenario runner and experiment front end.
//!
//! Exit codes: 0 success, 1 task failure, 2 input error (bad arguments,
//! unreadable or invalid files).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mif::harness::{
    emit_metrics, eval_adaptation, generate_scenario_doc, report_line, run_task, stored_graph,
    sweep_tau, ChangeKind, MemoryMode,
};
use mif::simworld::{build_scenario, scenario_to_json, JitterModel, Scenario, ScenarioDoc};
use mif::spatial::{
    graph_from_json, graph_to_json, match_nodes, total_discrepancy, DiscrepancyParams, SceneGraph,
};

#[derive(Parser)]
#[command(name = "mif", version, about = "Scenario simulator and experiment suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario end to end and print the run report.
    Run(RunArgs),
    /// Trigger-threshold ROC sweep over a labeled suite directory.
    SweepTau(SweepArgs),
    /// Success-rate table over a suite directory, per change type and mode.
    EvalAdaptation(EvalArgs),
    /// Run one scenario and print the final stance safety diagnostics.
    EvalIps { scenario: PathBuf },
    /// Scene-graph inspection.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Parse and validate a scenario document.
    Validate { scenario: PathBuf },
    /// Write a suite directory (scenario documents plus a manifest).
    GenSuite(GenSuiteArgs),
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Memory mode: static, initial, or full.
    #[arg(long, default_value = "full")]
    mode: MemoryMode,
    /// Overrides the document's seed (MIF_SEED overrides the document too;
    /// this flag wins over both).
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the report as a JSON line to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    suite: PathBuf,
    /// Comma-separated thresholds, e.g. 0.2,0.45,0.7.
    #[arg(long, value_delimiter = ',', required = true)]
    taus: Vec<f64>,
}

#[derive(Args)]
struct EvalArgs {
    suite: PathBuf,
    /// Comma-separated memory modes to compare.
    #[arg(long, value_delimiter = ',', default_values = ["static", "initial", "full"])]
    modes: Vec<MemoryMode>,
    /// Emits runs.jsonl and aggregate.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Prints a graph in canonical form. Accepts a graph document or a
    /// scenario document (whose stored memory graph is exported).
    Dump { file: PathBuf },
    /// Prints the discrepancy score D between two graphs.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct GenSuiteArgs {
    out_dir: PathBuf,
    /// Suite flavor: relocate, remove, add, or sweep (labeled changed and
    /// unchanged halves for sweep-tau).
    #[arg(long, default_value = "relocate")]
    kind: String,
    #[arg(long, default_value_t = 30)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    change: ChangeKind,
}

fn load_doc(path: &Path) -> Result<ScenarioDoc> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a scenario, applying seed overrides: flag beats MIF_SEED beats the
/// document.
fn load_with_seed(path: &Path, flag_seed: Option<u64>) -> Result<Scenario> {
    let mut doc = load_doc(path)?;
    if let Ok(env) = std::env::var("MIF_SEED") {
        doc.seed = env
            .parse()
            .with_context(|| format!("MIF_SEED must be an unsigned integer, got '{env}'"))?;
    }
    if let Some(seed) = flag_seed {
        doc.seed = seed;
    }
    build_scenario(&doc, path.parent()).context("building scenario")
}

fn load_suite(dir: &Path) -> Result<Vec<(ChangeKind, Scenario)>> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    if entries.is_empty() {
        bail!("suite manifest {} lists no scenarios", manifest_path.display());
    }
    entries
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            Ok((e.change, load_with_seed(&path, None)?))
        })
        .collect()
}

/// Loads either a graph document or a scenario document's stored graph.
fn load_graph(path: &Path) -> Result<SceneGraph> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if let Ok(graph) = graph_from_json(&text) {
        return Ok(graph);
    }
    let scenario = load_with_seed(path, None)
        .with_context(|| format!("{} is neither a graph nor a scenario document", path.display()))?;
    Ok(stored_graph(&scenario.world))
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let scenario = load_with_seed(&args.scenario, args.seed)?;
    let report = run_task(&scenario, args.mode);
    let line = report_line(&report);
    println!("{line}");
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{line}\n"))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(if report.success { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let suite: Vec<(Scenario, bool)> = load_suite(&args.suite)?
        .into_iter()
        .map(|(kind, s)| (s, kind != ChangeKind::Unchanged))
        .collect();
    let rows = sweep_tau(&suite, &args.taus)?;
    println!("tau,tpr,fpr,f1");
    for r in rows {
        println!("{},{},{},{}", r.tau, r.tpr, r.fpr, r.f1);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_adaptation(args: &EvalArgs) -> Result<ExitCode> {
    let mut by_kind: std::collections::BTreeMap<ChangeKind, Vec<Scenario>> = Default::default();
    for (kind, scenario) in load_suite(&args.suite)? {
        by_kind.entry(kind).or_default().push(scenario);
    }
    let suites: Vec<(ChangeKind, Vec<Scenario>)> = by_kind.into_iter().collect();
    let (rows, reports) = eval_adaptation(&suites, &args.modes)?;
    println!("change,mode,n,successes,rate,ci_low,ci_high");
    for r in rows {
        println!(
            "{},{},{},{},{:.3},{:.3},{:.3}",
            r.change, r.mode, r.n, r.successes, r.rate, r.ci_low, r.ci_high
        );
    }
    if let Some(out) = &args.out {
        emit_metrics(&reports, out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_ips(path: &Path) -> Result<ExitCode> {
    let scenario = load_with_seed(path, None)?;
    let report = run_task(&scenario, MemoryMode::Full);
    match (&report.ips_diag, &report.final_stance) {
        (Some(d), Some(s)) => {
            println!(
                "stance x={:.3} y={:.3} heading={:.3}",
                s.x, s.y, s.heading
            );
            println!(
                "collision_free={} reachable={} stable={}",
                d.i_col, d.i_ik, d.i_stab
            );
            println!(
                "clearance_m={:.4} reach_m={:.4} stability_margin_m={:.4}",
                d.clearance_m, d.reach_m, d.stability_margin_m
            );
        }
        _ => println!("no stance was attempted ({})", report.reason),
    }
    Ok(if report.success { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_graph(command: &GraphCommand) -> Result<ExitCode> {
    match command {
        GraphCommand::Dump { file } => {
            println!("{}", graph_to_json(&load_graph(file)?));
        }
        GraphCommand::Diff { a, b } => {
            let ga = load_graph(a)?;
            let gb = load_graph(b)?;
            let params = DiscrepancyParams::default();
            let matching = match_nodes(&ga, &gb, &params);
            let d = total_discrepancy(&ga, &gb, &matching, &params)?;
            // the score is nonnegative by construction; scrub float dust so
            // identical graphs print exactly zero
            println!("D = {}", if d.abs() < 1e-12 { 0.0 } else { d });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let scenario = load_with_seed(path, None)?;
    println!(
        "ok: {} objects, {} events, query '{}'",
        scenario.world.objects.len(),
        scenario.events.len(),
        scenario.query.object
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_suite(args: &GenSuiteArgs) -> Result<ExitCode> {
    let docs: Vec<(ChangeKind, ScenarioDoc)> = match args.kind.as_str() {
        "relocate" | "remove" | "add" => {
            let kind: ChangeKind = args.kind.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            (0..args.count as u64)
                .map(|i| (kind, generate_scenario_doc(kind, i, args.seed)))
                .collect()
        }
        "sweep" => (0..args.count as u64)
            .map(|i| {
                if i % 2 == 0 {
                    (
                        ChangeKind::Relocate,
                        generate_scenario_doc(ChangeKind::Relocate, i, args.seed),
                    )
                } else {
                    // unchanged half under elevated gait noise, the
                    // false-positive stressor for the threshold sweep
                    let mut doc = generate_scenario_doc(ChangeKind::Unchanged, i, args.seed);
                    let mut jitter = JitterModel::default();
                    jitter.amp0 = 0.08;
                    jitter.p_spurious = 0.3;
                    doc.params.jitter = Some(jitter);
                    (ChangeKind::Unchanged, doc)
                }
            })
            .collect(),
        other => bail!("unknown suite kind '{other}' (expected relocate, remove, add, or sweep)"),
    };
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut manifest = Vec::with_capacity(docs.len());
    for (i, (change, doc)) in docs.iter().enumerate() {
        let file = format!("scenario_{i:03}.json");
        std::fs::write(args.out_dir.join(&file), scenario_to_json(doc))?;
        manifest.push(ManifestEntry { file, change: *change });
    }
    std::fs::write(
        args.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("wrote {} scenarios to {}", docs.len(), args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SweepTau(args) => cmd_sweep(args),
        Command::EvalAdaptation(args) => cmd_eval_adaptation(args),
        Command::EvalIps { scenario } => cmd_eval_ips(scenario),
        Command::Graph { command } => cmd_graph(command),
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::GenSuite(args) => cmd_gen_suite(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
