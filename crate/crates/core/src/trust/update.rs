//! The per-step trust update: reward, clamp, ramp, Beta-Bernoulli counts,
//! dual moving averages and the combined score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::HyperParams;
use super::store::{TrustKey, TrustStore};
use crate::error::{Error, Result};
use crate::ids::{AgentId, RoleId};
use crate::routing::RoutingPlan;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Soft reward for one specialist.
///
/// `2·sim_agent − 1`, minus `kappa·max(0, sim_final − sim_agent)` when the
/// fused answer missed the ground truth.
pub fn compute_reward(sim_agent: f64, sim_final: f64, agreement: bool, kappa: f64) -> Result<f64> {
    check_unit("sim_agent", sim_agent)?;
    check_unit("sim_final", sim_final)?;
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InputDomain(format!("kappa = {kappa} must be > 0")));
    }
    let base = 2.0 * sim_agent - 1.0;
    if agreement {
        Ok(base)
    } else {
        let penalty = (sim_final - sim_agent).max(0.0);
        Ok(base - kappa * penalty)
    }
}

pub fn clamp_reward(raw: f64) -> f64 {
    raw.clamp(-1.0, 1.0)
}

/// `1 − exp(−N_c / T)`.
pub fn ramp_factor(category_count: u64, ramp_t: f64) -> f64 {
    1.0 - (-(category_count as f64) / ramp_t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub raw: f64,
    pub clamped: f64,
    pub scaled: f64,
    pub success_fraction: f64,
}

impl Reward {
    pub fn new(raw: f64, ramp: f64) -> Self {
        let clamped = clamp_reward(raw);
        let scaled = ramp * clamped;
        Self {
            raw,
            clamped,
            scaled,
            success_fraction: (scaled + 1.0) / 2.0,
        }
    }
}

/// Adds `r̃` positive and `1 − r̃` negative evidence, returning the new
/// posterior mean.
pub fn bayes_update(entry: &mut super::TrustEntry, success_fraction: f64) -> f64 {
    entry.pos_count += success_fraction;
    entry.neg_count += 1.0 - success_fraction;
    entry.posterior_mean()
}

pub fn ema_update(
    entry: &mut super::TrustEntry,
    scaled_reward: f64,
    posterior_mean: f64,
    params: &HyperParams,
) {
    entry.ema_short = (1.0 - params.lambda_f) * entry.ema_short + params.lambda_f * scaled_reward;
    entry.ema_long = (1.0 - params.lambda_g) * entry.ema_long + params.lambda_g * posterior_mean;
}

/// Unclamped `μ·f + (1 − μ)·g + γ·R̃`.
pub fn raw_final_score(ema_short: f64, ema_long: f64, scaled_reward: f64, params: &HyperParams) -> f64 {
    params.mu * ema_short + (1.0 - params.mu) * ema_long + params.gamma * scaled_reward
}

pub fn final_score(ema_short: f64, ema_long: f64, scaled_reward: f64, params: &HyperParams) -> f64 {
    raw_final_score(ema_short, ema_long, scaled_reward, params).clamp(0.0, 1.0)
}

/// Which links of the update chain are live. Disabled links are held at
/// neutral values; used for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    /// With the reward off nothing is written at all.
    pub reward: bool,
    /// Off: ramp factor ≡ 1.
    pub scaling: bool,
    /// Off: counts frozen and posterior mean ≡ 0.5.
    pub bayes: bool,
    /// Off: averages frozen; the score is the clamped scaled reward.
    pub dual_ema: bool,
}

impl Stages {
    pub const FULL: Stages = Stages {
        reward: true,
        scaling: true,
        bayes: true,
        dual_ema: true,
    };
    pub const NONE: Stages = Stages {
        reward: false,
        scaling: false,
        bayes: false,
        dual_ema: false,
    };
    pub const REWARD_ONLY: Stages = Stages {
        reward: true,
        ..Stages::NONE
    };
    pub const PLUS_SCALING: Stages = Stages {
        scaling: true,
        ..Stages::REWARD_ONLY
    };
    pub const PLUS_BAYES: Stages = Stages {
        bayes: true,
        ..Stages::PLUS_SCALING
    };
}

impl Default for Stages {
    fn default() -> Self {
        Stages::FULL
    }
}

/// What one apply step wrote for one triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub key: TrustKey,
    pub reward: Reward,
    pub posterior_mean: f64,
    pub ema_short: f64,
    pub ema_long: f64,
    pub score: f64,
}

/// Outcome of one fused answer, as seen by the trust updater.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub per_agent_similarity: BTreeMap<AgentId, f64>,
    pub final_similarity: f64,
    pub agreement: bool,
}

pub fn apply_outcome(
    store: &mut TrustStore,
    plan: &RoutingPlan,
    outcome: &Outcome,
    params: &HyperParams,
) -> Result<Vec<UpdateRecord>> {
    apply_outcome_with(store, plan, outcome, params, Stages::FULL)
}

/// Updates only the (agent, assigned role, plan category) triples of `plan`.
///
/// All inputs are validated before the first write, so an error leaves the
/// store untouched.
pub fn apply_outcome_with(
    store: &mut TrustStore,
    plan: &RoutingPlan,
    outcome: &Outcome,
    params: &HyperParams,
    stages: Stages,
) -> Result<Vec<UpdateRecord>> {
    let category = &plan.category;
    if !plan.assignments.is_empty() && store.category_count(category) == 0 {
        return Err(Error::ContractViolation(format!(
            "category {category} was never routed through this store"
        )));
    }
    check_unit("final similarity", outcome.final_similarity)?;
    let mut work: Vec<(AgentId, RoleId, f64)> = Vec::with_capacity(plan.assignments.len());
    for a in &plan.assignments {
        let sim = *outcome.per_agent_similarity.get(&a.agent).ok_or_else(|| {
            Error::ContractViolation(format!("no similarity for selected agent {}", a.agent))
        })?;
        let raw = compute_reward(
            sim,
            outcome.final_similarity,
            outcome.agreement,
            params.kappa,
        )?;
        work.push((a.agent.clone(), a.role.clone(), raw));
    }

    let ramp = if stages.scaling {
        ramp_factor(store.category_count(category), params.ramp_t)
    } else {
        1.0
    };
    let mut records = Vec::with_capacity(work.len());
    if stages.reward {
        for (agent, role, raw) in work {
            let key = TrustKey {
                agent,
                role,
                category: category.clone(),
            };
            records.push(update_entry(store, key, raw, ramp, params, stages));
        }
    }
    store.advance_step();
    Ok(records)
}

fn update_entry(
    store: &mut TrustStore,
    key: TrustKey,
    raw: f64,
    ramp: f64,
    params: &HyperParams,
    stages: Stages,
) -> UpdateRecord {
    let reward = Reward::new(raw, ramp);
    let entry = store.entry_mut(key.clone());
    let q = if stages.bayes {
        bayes_update(entry, reward.success_fraction)
    } else {
        0.5
    };
    if stages.dual_ema {
        ema_update(entry, reward.scaled, q, params);
        entry.score = final_score(entry.ema_short, entry.ema_long, reward.scaled, params);
    } else {
        entry.score = reward.scaled.clamp(0.0, 1.0);
    }
    UpdateRecord {
        key,
        reward,
        posterior_mean: q,
        ema_short: entry.ema_short,
        ema_long: entry.ema_long,
        score: entry.score,
    }
}
