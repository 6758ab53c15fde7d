//! The per-query pipeline: classify, route, run specialists, fuse, and (in
//! optimize mode) update trust.

mod aggregate;
mod classify;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, render_evidence, weighted_vote, Aggregated, Reasoner, DEFAULT_TRACE_BUDGET};
pub use classify::{
    classify, keyword_category, CategoryTaxonomy, Classification, Classifier, COUNTING,
    DISTANCE_DEPTH, ORIENTATION, SIZE, SPATIAL_RELATION,
};

use crate::agents::{AgentPool, EvidenceRecord};
use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId};
use crate::query::QueryItem;
use crate::routing::{build_routing_plan, plan_routing, RoleSet, RoutingPlan};
use crate::similarity::{agrees, sim_or_zero, Answer};
use crate::trust::{apply_outcome_with, HyperParams, Outcome, SharedTrustStore, Stages, UpdateRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Trust is updated after every query.
    Optimize,
    /// Trust is read-only.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub query_id: String,
    pub category: CategoryId,
    pub plan: RoutingPlan,
    pub evidence: Vec<EvidenceRecord>,
    pub final_answer: Option<Answer>,
    /// Present iff the query carried ground truth.
    pub agreement: Option<bool>,
    pub per_agent_similarity: Option<BTreeMap<AgentId, f64>>,
    pub final_similarity: Option<f64>,
    pub updates: Vec<UpdateRecord>,
    pub flags: Vec<String>,
}

#[derive(Debug)]
pub struct Orchestrator {
    pub pool: AgentPool,
    pub roles: RoleSet,
    pub taxonomy: CategoryTaxonomy,
    pub params: HyperParams,
    pub classifier: Classifier,
    pub reasoner: Reasoner,
    pub stages: Stages,
}

impl Orchestrator {
    pub fn new(pool: AgentPool, params: HyperParams) -> Self {
        Self {
            pool,
            roles: RoleSet::canonical(),
            taxonomy: CategoryTaxonomy::default(),
            params,
            classifier: Classifier::Keyword,
            reasoner: Reasoner::WeightedVote,
            stages: Stages::FULL,
        }
    }

    /// Runs every assignment of `plan`; specialists run concurrently unless
    /// the whole plan is simulated. Failures become answerless records.
    pub fn execute_plan(&self, plan: &RoutingPlan, query: &QueryItem) -> Vec<EvidenceRecord> {
        let run = |agent: &AgentId, role: &crate::ids::RoleId| {
            let outcome = match self.pool.get(agent) {
                Some(a) => a.backend.execute(agent, role, &plan.category, query),
                None => Err(Error::ContractViolation(format!("agent {agent} is not in the pool"))),
            };
            outcome.unwrap_or_else(|e| EvidenceRecord::failed(agent.clone(), role.clone(), &e))
        };
        let all_local = plan
            .assignments
            .iter()
            .all(|a| self.pool.get(&a.agent).is_some_and(|x| x.backend.is_simulated()));
        if all_local || plan.assignments.len() < 2 {
            return plan.assignments.iter().map(|a| run(&a.agent, &a.role)).collect();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = plan
                .assignments
                .iter()
                .map(|a| s.spawn(move || run(&a.agent, &a.role)))
                .collect();
            handles
                .into_iter()
                .zip(&plan.assignments)
                .map(|(h, a)| {
                    h.join().unwrap_or_else(|_| {
                        EvidenceRecord::failed(
                            a.agent.clone(),
                            a.role.clone(),
                            &Error::ContractViolation("specialist panicked".into()),
                        )
                    })
                })
                .collect()
        })
    }

    pub fn run_step(&self, query: &QueryItem, store: &SharedTrustStore, mode: Mode) -> Result<StepResult> {
        query.validate()?;
        if mode == Mode::Optimize && query.ground_truth.is_none() {
            return Err(Error::ContractViolation(format!(
                "optimize mode needs ground truth for {}",
                query.query_id
            )));
        }
        let mut flags = Vec::new();
        let classification = classify(query, &self.taxonomy, &self.classifier);
        flags.extend(classification.flag);
        let category = classification.category;
        let pool_ids = self.pool.ids();

        let plan = match mode {
            Mode::Optimize => build_routing_plan(&mut store.write(), &pool_ids, &category, &self.roles, &self.params)?,
            Mode::Evaluate => plan_routing(&store.read(), &pool_ids, &category, &self.roles, &self.params)?,
        };
        let evidence = self.execute_plan(&plan, query);
        flags.extend(evidence.iter().filter_map(|r| {
            r.error.as_ref().map(|e| format!("agent {}: {e}", r.agent))
        }));
        let fused = aggregate(query, &plan, &evidence, &self.reasoner)?;
        flags.extend(fused.flag);

        let mut result = StepResult {
            query_id: query.query_id.clone(),
            category,
            plan,
            evidence,
            final_answer: fused.answer,
            agreement: None,
            per_agent_similarity: None,
            final_similarity: None,
            updates: Vec::new(),
            flags,
        };
        if let Some(truth) = &query.ground_truth {
            let per_agent: BTreeMap<AgentId, f64> = result
                .evidence
                .iter()
                .map(|r| (r.agent.clone(), sim_or_zero(r.answer.as_ref(), truth)))
                .collect();
            let final_sim = sim_or_zero(result.final_answer.as_ref(), truth);
            let agreement = agrees(result.final_answer.as_ref(), truth);
            if mode == Mode::Optimize {
                let outcome = Outcome {
                    per_agent_similarity: per_agent.clone(),
                    final_similarity: final_sim,
                    agreement,
                };
                result.updates = apply_outcome_with(
                    &mut store.write(),
                    &result.plan,
                    &outcome,
                    &self.params,
                    self.stages,
                )?;
            }
            result.agreement = Some(agreement);
            result.per_agent_similarity = Some(per_agent);
            result.final_similarity = Some(final_sim);
        }
        Ok(result)
    }

    /// Optimize over `queries` in order.
    pub fn optimize<'a>(
        &self,
        queries: impl IntoIterator<Item = &'a QueryItem>,
        store: &SharedTrustStore,
    ) -> Result<Vec<StepResult>> {
        queries
            .into_iter()
            .map(|q| self.run_step(q, store, Mode::Optimize))
            .collect()
    }

    /// Frozen evaluation, up to `parallelism` queries at a time. Results are
    /// returned in input order.
    pub fn evaluate(
        &self,
        queries: &[QueryItem],
        store: &SharedTrustStore,
        parallelism: usize,
    ) -> Result<Vec<StepResult>> {
        let workers = parallelism.max(1).min(queries.len().max(1));
        if workers == 1 {
            return queries
                .iter()
                .map(|q| self.run_step(q, store, Mode::Evaluate))
                .collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<Result<StepResult>>> = (0..queries.len()).map(|_| None).collect();
        let chunks: Vec<Vec<(usize, Result<StepResult>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= queries.len() {
                                break done;
                            }
                            done.push((i, self.run_step(&queries[i], store, Mode::Evaluate)));
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        for (i, r) in chunks.into_iter().flatten() {
            slots[i] = Some(r);
        }
        slots
            .into_iter()
            .map(|r| r.expect("every query index is processed once"))
            .collect()
    }
}
