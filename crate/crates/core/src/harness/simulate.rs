//! Seeded experiments over simulated pools: the stage ablation and the
//! optimization-size sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::RunConfig;
use crate::agents::BackendConfig;
use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::orchestrator::StepResult;
use crate::query::QueryItem;
use crate::routing::RoutingPlan;
use crate::similarity::{option_labels, Answer, AnswerKind};
use crate::trust::{SharedTrustStore, Stages};

/// Ablation presets in reporting order; each adds one link of the chain.
pub const ABLATION_PRESETS: [(&str, Stages); 4] = [
    ("reward_only", Stages::REWARD_ONLY),
    ("plus_scaling", Stages::PLUS_SCALING),
    ("plus_bayes", Stages::PLUS_BAYES),
    ("full", Stages::FULL),
];

/// `n` choice items with seeded truths, categories drawn uniformly from
/// `categories`. Ids embed `tag` and `seed` so distinct trials never share
/// simulated agent draws.
pub fn synthetic_stream(
    n: usize,
    categories: &[CategoryId],
    options: usize,
    seed: u64,
    tag: &str,
) -> Vec<QueryItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64)));
    let labels = option_labels(options);
    (0..n)
        .map(|i| {
            let category = categories[rng.random_range(0..categories.len())].clone();
            let truth = &labels[rng.random_range(0..options)];
            QueryItem {
                query_id: format!("{tag}-{seed}-{i}"),
                text: format!("synthetic {category} item {i}"),
                image_ref: None,
                category_hint: Some(category),
                answer_kind: AnswerKind::Choice,
                options: Some((1..=options).map(|k| format!("option {k}")).collect()),
                ground_truth: Some(Answer::choice(truth)),
            }
        })
        .collect()
}

/// The (agent, role) cells with the highest profile accuracy in `category`.
pub fn best_cells(cfg: &RunConfig, category: &CategoryId) -> Result<Vec<(AgentId, RoleId)>> {
    let mut cells = Vec::new();
    for spec in &cfg.pool {
        let BackendConfig::Simulated(profile) = &spec.backend else {
            return Err(Error::Config(format!("agent {} is not simulated", spec.id)));
        };
        for role in &cfg.roles {
            cells.push((profile.accuracy(role, category)?, spec.id.clone(), role.clone()));
        }
    }
    let top = cells.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(cells
        .into_iter()
        .filter(|c| c.0 == top)
        .map(|(_, a, r)| (a, r))
        .collect())
}

/// A plan is correct when it gives some best-profile agent its matching role.
pub fn routing_correct(plan: &RoutingPlan, best: &[(AgentId, RoleId)]) -> bool {
    plan.assignments
        .iter()
        .any(|a| best.iter().any(|(ag, r)| ag == &a.agent && r == &a.role))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    /// Fraction of optimization steps that were routed correctly.
    pub routing_correctness: f64,
    /// Frozen accuracy on held-out queries after optimization.
    pub accuracy: f64,
}

/// One seeded trial: optimize `steps` synthetic queries with `stages`, then
/// score a held-out stream with frozen trust.
pub fn run_trial(cfg: &RunConfig, stages: Stages, steps: usize, seed: u64) -> Result<TrialResult> {
    let mut orch = cfg.orchestrator()?;
    orch.stages = stages;
    let categories = if cfg.simulate.categories.is_empty() {
        &cfg.taxonomy.categories
    } else {
        &cfg.simulate.categories
    };
    let best: BTreeMap<&CategoryId, Vec<(AgentId, RoleId)>> = categories
        .iter()
        .map(|c| Ok((c, best_cells(cfg, c)?)))
        .collect::<Result<_>>()?;
    let options = cfg.simulate.options;
    let train = synthetic_stream(steps, categories, options, seed, "opt");
    let held_out = synthetic_stream(cfg.simulate.eval_queries, categories, options, seed, "eval");

    let store = SharedTrustStore::default();
    let results = orch.optimize(&train, &store)?;
    let correct = results
        .iter()
        .filter(|s| routing_correct(&s.plan, &best[&s.category]))
        .count();
    let eval = orch.evaluate(&held_out, &store, 1)?;
    Ok(TrialResult {
        routing_correctness: correct as f64 / results.len() as f64,
        accuracy: mean_agreement(&eval),
    })
}

fn mean_agreement(steps: &[StepResult]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    steps.iter().filter(|s| s.agreement == Some(true)).count() as f64 / steps.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub preset: String,
    pub stages: Stages,
    pub mean_routing_correctness: f64,
    pub mean_accuracy: f64,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub size: usize,
    pub mean_routing_correctness: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub trials: u64,
    pub steps: usize,
    pub ablation: Vec<AblationRow>,
    pub sweep: Vec<SweepRow>,
}

/// Runs `trials` seeded trials, spreading them over `parallelism` threads.
/// Results come back in seed order.
fn run_trials(cfg: &RunConfig, stages: Stages, steps: usize) -> Result<Vec<TrialResult>> {
    let seeds: Vec<u64> = (0..cfg.simulate.trials).map(|i| cfg.seed + i).collect();
    let workers = cfg.parallelism.clamp(1, seeds.len());
    let chunk = seeds.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&seed| run_trial(cfg, stages, steps, seed))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(seeds.len());
        for h in handles {
            out.extend(h.join().expect("trial worker panicked")?);
        }
        Ok(out)
    })
}

fn means(trials: &[TrialResult]) -> (f64, f64) {
    let n = trials.len() as f64;
    (
        trials.iter().map(|t| t.routing_correctness).sum::<f64>() / n,
        trials.iter().map(|t| t.accuracy).sum::<f64>() / n,
    )
}

/// Stage ablation at the configured step count, then the size sweep with
/// the full chain. Only simulated pools are accepted.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if let Some(spec) = cfg
        .pool
        .iter()
        .find(|s| !matches!(s.backend, BackendConfig::Simulated(_)))
    {
        return Err(Error::Config(format!(
            "simulate needs a simulated pool; agent {} is remote",
            spec.id
        )));
    }
    let mut ablation = Vec::new();
    for (name, stages) in ABLATION_PRESETS {
        let trials = run_trials(cfg, stages, cfg.simulate.steps)?;
        let (rc, acc) = means(&trials);
        ablation.push(AblationRow {
            preset: name.to_string(),
            stages,
            mean_routing_correctness: rc,
            mean_accuracy: acc,
            trials,
        });
    }
    let mut sweep = Vec::new();
    for &size in &cfg.simulate.sizes {
        let (rc, acc) = means(&run_trials(cfg, Stages::FULL, size)?);
        sweep.push(SweepRow {
            size,
            mean_routing_correctness: rc,
            mean_accuracy: acc,
        });
    }
    let report = SimulationReport {
        seed: cfg.seed,
        trials: cfg.simulate.trials,
        steps: cfg.simulate.steps,
        ablation,
        sweep,
    };
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("simulation.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

impl SimulationReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} trials per row, seeds {}..{}\nablation ({} steps):\n",
            self.trials,
            self.seed,
            self.seed + self.trials,
            self.steps
        );
        let _ = writeln!(out, "  {:<14} {:>10} {:>10}", "preset", "routing", "accuracy");
        for r in &self.ablation {
            let _ = writeln!(
                out,
                "  {:<14} {:>10.4} {:>10.4}",
                r.preset, r.mean_routing_correctness, r.mean_accuracy
            );
        }
        let _ = writeln!(out, "size sweep (full chain):");
        let _ = writeln!(out, "  {:<14} {:>10} {:>10}", "size", "routing", "accuracy");
        for r in &self.sweep {
            let _ = writeln!(
                out,
                "  {:<14} {:>10.4} {:>10.4}",
                r.size, r.mean_routing_correctness, r.mean_accuracy
            );
        }
        out
    }
}
