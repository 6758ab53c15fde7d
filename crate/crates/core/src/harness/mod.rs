//! The runnable commands behind the `trustroute` binary.

mod config;
mod simulate;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{ClassifierConfig, Overrides, ReasonerConfig, RunConfig, SimulateConfig};
pub use simulate::{
    best_cells, cmd_simulate, routing_correct, run_trial, synthetic_stream, AblationRow,
    SimulationReport, SweepRow, TrialResult, ABLATION_PRESETS,
};

use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::orchestrator::StepResult;
use crate::persistence::{
    export_trajectories, load_snapshot, read_query_stream, save_snapshot, stratified_subsample,
    trajectory_rows, write_step_log,
};
use crate::query::QueryItem;
use crate::trust::{SharedTrustStore, TrustStore};

pub const EXIT_OK: u8 = 0;
/// Bad flags, bad config values, unsupported pool for the command.
pub const EXIT_CONFIG: u8 = 2;
/// Unreadable or unwritable files, malformed or invalid input records.
pub const EXIT_IO: u8 = 3;
/// Anything that goes wrong while steps are running.
pub const EXIT_RUNTIME: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. }
        | Error::Malformed { .. }
        | Error::InvalidRecord { .. }
        | Error::IncompatibleVersion { .. } => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAccuracy {
    pub category: CategoryId,
    pub queries: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy of final answers per category, over queries with ground truth.
pub fn accuracy_table(steps: &[StepResult]) -> (Vec<CategoryAccuracy>, Option<f64>) {
    let mut tally: BTreeMap<&CategoryId, (usize, usize)> = BTreeMap::new();
    for s in steps {
        if let Some(ok) = s.agreement {
            let t = tally.entry(&s.category).or_default();
            t.0 += 1;
            t.1 += usize::from(ok);
        }
    }
    let (n, k) = tally.values().fold((0, 0), |(n, k), t| (n + t.0, k + t.1));
    let rows = tally
        .into_iter()
        .map(|(c, (n, k))| CategoryAccuracy {
            category: c.clone(),
            queries: n,
            correct: k,
            accuracy: k as f64 / n as f64,
        })
        .collect();
    (rows, (n > 0).then(|| k as f64 / n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub agent_id: AgentId,
    pub role_id: RoleId,
    pub category_id: CategoryId,
    pub score: f64,
    pub posterior_mean: f64,
    pub observations: f64,
}

fn score_table(store: &TrustStore) -> Vec<ScoreRow> {
    store
        .iter()
        .map(|(k, e)| ScoreRow {
            agent_id: k.agent.clone(),
            role_id: k.role.clone(),
            category_id: k.category.clone(),
            score: e.score,
            posterior_mean: e.posterior_mean(),
            observations: e.total_count() - 2.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingCount {
    pub category: CategoryId,
    pub agent_id: AgentId,
    pub role_id: RoleId,
    pub count: usize,
}

/// How often each agent held each role, per category.
pub fn routing_histogram(steps: &[StepResult]) -> Vec<RoutingCount> {
    let mut counts: BTreeMap<(&CategoryId, &AgentId, &RoleId), usize> = BTreeMap::new();
    for s in steps {
        for a in &s.plan.assignments {
            *counts.entry((&s.category, &a.agent, &a.role)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((c, a, r), count)| RoutingCount {
            category: c.clone(),
            agent_id: a.clone(),
            role_id: r.clone(),
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub queries: usize,
    pub skipped_records: usize,
    pub step: u64,
    pub category_counts: BTreeMap<CategoryId, u64>,
    pub per_category: Vec<CategoryAccuracy>,
    pub overall_accuracy: Option<f64>,
    pub flagged_steps: usize,
    pub scores: Vec<ScoreRow>,
    pub snapshot: PathBuf,
    pub trajectories: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub queries: usize,
    pub skipped_records: usize,
    pub per_category: Vec<CategoryAccuracy>,
    pub overall_accuracy: Option<f64>,
    pub flagged_steps: usize,
    pub routing: Vec<RoutingCount>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Loads the configured stream and applies the stratified subsample.
/// Returns the items and the number of skipped records.
pub fn load_stream(cfg: &RunConfig) -> Result<(Vec<QueryItem>, usize)> {
    let path = cfg
        .stream
        .as_ref()
        .ok_or_else(|| Error::Config("no query stream given".into()))?;
    let (items, skipped) = read_query_stream(path, cfg.on_invalid)?;
    for e in &skipped {
        eprintln!("skipped: {e}");
    }
    let items = match cfg.per_category {
        Some(n) => stratified_subsample(&items, n, cfg.seed, &cfg.taxonomy),
        None => items,
    };
    Ok((items, skipped.len()))
}

/// Sequential trust optimization over the stream. Writes the final snapshot,
/// the trajectory CSV, a JSONL step log and `summary.json`.
pub fn cmd_optimize(cfg: &RunConfig) -> Result<OptimizeSummary> {
    cfg.validate()?;
    let orch = cfg.orchestrator()?;
    let (items, skipped) = load_stream(cfg)?;
    if let Some((i, q)) = items.iter().enumerate().find(|(_, q)| q.ground_truth.is_none()) {
        return Err(Error::InvalidRecord {
            path: cfg.stream.clone().unwrap_or_default(),
            line: i + 1,
            id: q.query_id.clone(),
            message: "optimize needs ground truth on every item".into(),
        });
    }
    let store = match &cfg.snapshot_in {
        Some(p) => load_snapshot(p)?.0,
        None => TrustStore::new(),
    };
    create_dir(&cfg.out_dir)?;
    let snapshot_path = cfg
        .snapshot_out
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("snapshot.json"));
    let trajectories = cfg.out_dir.join("trajectories.csv");

    let shared = SharedTrustStore::new(store);
    let steps = orch.optimize(&items, &shared)?;
    let store = shared.snapshot();

    save_snapshot(&store, &cfg.hyperparams, &snapshot_path)?;
    export_trajectories(&trajectory_rows(&steps), &trajectories)?;
    write_step_log(&steps, cfg.out_dir.join("steps.jsonl"))?;

    let (per_category, overall_accuracy) = accuracy_table(&steps);
    let summary = OptimizeSummary {
        queries: steps.len(),
        skipped_records: skipped,
        step: store.step(),
        category_counts: store.category_counts().clone(),
        per_category,
        overall_accuracy,
        flagged_steps: steps.iter().filter(|s| !s.flags.is_empty()).count(),
        scores: score_table(&store),
        snapshot: snapshot_path,
        trajectories,
    };
    write_json(&summary, &cfg.out_dir.join("summary.json"))?;
    Ok(summary)
}

/// Frozen evaluation against a saved snapshot. Routing uses the
/// hyperparameters recorded in the snapshot.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let snap = cfg
        .snapshot_in
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs a snapshot (--snapshot-in)".into()))?;
    let (store, params) = load_snapshot(snap)?;
    let orch = cfg.orchestrator_with(params)?;
    let (items, skipped) = load_stream(cfg)?;
    create_dir(&cfg.out_dir)?;

    let shared = SharedTrustStore::new(store);
    let steps = orch.evaluate(&items, &shared, cfg.parallelism)?;
    write_step_log(&steps, cfg.out_dir.join("predictions.jsonl"))?;

    let (per_category, overall_accuracy) = accuracy_table(&steps);
    let report = EvaluationReport {
        queries: steps.len(),
        skipped_records: skipped,
        per_category,
        overall_accuracy,
        flagged_steps: steps.iter().filter(|s| !s.flags.is_empty()).count(),
        routing: routing_histogram(&steps),
    };
    write_json(&report, &cfg.out_dir.join("evaluation.json"))?;
    Ok(report)
}

/// Writes the snapshot's score table as `scores.csv` in the output
/// directory and returns its path.
pub fn cmd_export(cfg: &RunConfig) -> Result<PathBuf> {
    let snap = cfg
        .snapshot_in
        .as_ref()
        .ok_or_else(|| Error::Config("export needs a snapshot (--snapshot-in)".into()))?;
    let (store, _) = load_snapshot(snap)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("scores.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    for row in score_table(&store) {
        w.serialize(row).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

fn render_accuracy(out: &mut String, rows: &[CategoryAccuracy], overall: Option<f64>) {
    for r in rows {
        let _ = writeln!(
            out,
            "  {:<18} {:>5}/{:<5} {}",
            r.category,
            r.correct,
            r.queries,
            pct(Some(r.accuracy))
        );
    }
    let _ = writeln!(out, "  {:<18} {:>11} {}", "overall", "", pct(overall));
}

impl OptimizeSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "optimized {} queries ({} skipped), {} flagged\naccuracy during optimization:\n",
            self.queries, self.skipped_records, self.flagged_steps
        );
        render_accuracy(&mut out, &self.per_category, self.overall_accuracy);
        let _ = writeln!(out, "scores:");
        for s in &self.scores {
            let _ = writeln!(
                out,
                "  {:<16} {:<16} {:<18} {:.4}",
                s.agent_id, s.role_id, s.category_id, s.score
            );
        }
        let _ = writeln!(out, "snapshot: {}", self.snapshot.display());
        let _ = writeln!(out, "trajectories: {}", self.trajectories.display());
        out
    }
}

impl EvaluationReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "evaluated {} queries ({} skipped), {} flagged\naccuracy:\n",
            self.queries, self.skipped_records, self.flagged_steps
        );
        render_accuracy(&mut out, &self.per_category, self.overall_accuracy);
        let _ = writeln!(out, "routing:");
        for r in &self.routing {
            let _ = writeln!(
                out,
                "  {:<18} {:<16} {:<16} {}",
                r.category, r.agent_id, r.role_id, r.count
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentSpec, ReliabilityProfile};
    use crate::persistence::write_query_stream;
    use crate::similarity::{Answer, AnswerKind};

    fn item(i: usize, truth: bool) -> QueryItem {
        QueryItem {
            query_id: format!("q{i}"),
            text: "How many mugs?".into(),
            image_ref: None,
            category_hint: Some(["counting", "size"][i % 2].into()),
            answer_kind: AnswerKind::Choice,
            options: Some(vec!["1".into(), "2".into(), "3".into()]),
            ground_truth: truth.then(|| Answer::choice("B")),
        }
    }

    fn config(dir: &Path, p: f64, items: &[QueryItem]) -> RunConfig {
        let stream = dir.join("q.jsonl");
        write_query_stream(items, &stream).unwrap();
        let mut cfg = RunConfig::with_pool(
            ["a", "b", "c"]
                .iter()
                .map(|id| AgentSpec::simulated(id, ReliabilityProfile::uniform(p, 1)))
                .collect(),
        );
        cfg.stream = Some(stream);
        cfg.out_dir = dir.join("out");
        cfg
    }

    #[test]
    fn optimize_then_evaluate() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<_> = (0..20).map(|i| item(i, true)).collect();
        let mut cfg = config(dir.path(), 1.0, &items);
        let summary = cmd_optimize(&cfg).unwrap();
        assert_eq!(summary.queries, 20);
        assert_eq!(summary.overall_accuracy, Some(1.0));
        assert_eq!(summary.category_counts[&CategoryId::from("counting")], 10);
        assert!(summary.render().contains("overall"));
        for f in ["snapshot.json", "trajectories.csv", "steps.jsonl", "summary.json"] {
            assert!(cfg.out_dir.join(f).exists(), "{f}");
        }
        cfg.snapshot_in = Some(summary.snapshot.clone());
        let report = cmd_evaluate(&cfg).unwrap();
        assert_eq!(report.overall_accuracy, Some(1.0));
        assert_eq!(report.routing.iter().map(|r| r.count).sum::<usize>(), 60);
        let csv = cmd_export(&cfg).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + summary.scores.len());
    }

    #[test]
    fn missing_truth_fails_before_any_step() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![item(0, true), item(1, false)];
        let cfg = config(dir.path(), 1.0, &items);
        let e = cmd_optimize(&cfg).unwrap_err();
        assert!(matches!(&e, Error::InvalidRecord { id, .. } if id == "q1"));
        assert_eq!(exit_code(&e), EXIT_IO);
        assert!(!cfg.out_dir.join("snapshot.json").exists());
    }

    #[test]
    fn evaluate_needs_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), 1.0, &[item(0, true)]);
        let e = cmd_evaluate(&cfg).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn wrong_pool_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<_> = (0..12).map(|i| item(i, true)).collect();
        let mut cfg = config(dir.path(), 0.0, &items);
        let summary = cmd_optimize(&cfg).unwrap();
        cfg.snapshot_in = Some(summary.snapshot);
        assert_eq!(cmd_evaluate(&cfg).unwrap().overall_accuracy, Some(0.0));
    }
}
