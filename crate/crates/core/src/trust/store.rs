use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};

use crate::ids::{AgentId, CategoryId, RoleId};

/// Beta(1, 1) prior: the posterior mean of an unseen triple is 0.5.
pub const PRIOR_ALPHA: f64 = 1.0;
pub const PRIOR_BETA: f64 = 1.0;
pub const INITIAL_EMA_SHORT: f64 = 0.0;
pub const INITIAL_EMA_LONG: f64 = 0.5;
pub const INITIAL_SCORE: f64 = 0.5;

/// Reliability state of one (agent, role, category) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustEntry {
    pub pos_count: f64,
    pub neg_count: f64,
    pub ema_short: f64,
    pub ema_long: f64,
    pub score: f64,
}

impl Default for TrustEntry {
    fn default() -> Self {
        Self {
            pos_count: PRIOR_ALPHA,
            neg_count: PRIOR_BETA,
            ema_short: INITIAL_EMA_SHORT,
            ema_long: INITIAL_EMA_LONG,
            score: INITIAL_SCORE,
        }
    }
}

impl TrustEntry {
    pub fn posterior_mean(&self) -> f64 {
        self.pos_count / (self.pos_count + self.neg_count)
    }

    pub fn total_count(&self) -> f64 {
        self.pos_count + self.neg_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrustKey {
    pub agent: AgentId,
    pub role: RoleId,
    pub category: CategoryId,
}

impl TrustKey {
    pub fn new(
        agent: impl Into<AgentId>,
        role: impl Into<RoleId>,
        category: impl Into<CategoryId>,
    ) -> Self {
        Self {
            agent: agent.into(),
            role: role.into(),
            category: category.into(),
        }
    }
}

/// All trust state. Absent keys read as a fresh [`TrustEntry`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrustStore {
    entries: BTreeMap<TrustKey, TrustEntry>,
    category_counts: BTreeMap<CategoryId, u64>,
    step: u64,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_parts(
        entries: BTreeMap<TrustKey, TrustEntry>,
        category_counts: BTreeMap<CategoryId, u64>,
        step: u64,
    ) -> Self {
        Self {
            entries,
            category_counts,
            step,
        }
    }

    pub fn entry(&self, agent: &AgentId, role: &RoleId, category: &CategoryId) -> TrustEntry {
        self.get(&TrustKey {
            agent: agent.clone(),
            role: role.clone(),
            category: category.clone(),
        })
    }

    pub fn get(&self, key: &TrustKey) -> TrustEntry {
        self.entries.get(key).copied().unwrap_or_default()
    }

    pub fn score(&self, agent: &AgentId, role: &RoleId, category: &CategoryId) -> f64 {
        self.entry(agent, role, category).score
    }

    pub(crate) fn entry_mut(&mut self, key: TrustKey) -> &mut TrustEntry {
        self.entries.entry(key).or_default()
    }

    /// Materialized entries in (agent, role, category) order.
    pub fn iter(&self) -> impl Iterator<Item = (&TrustKey, &TrustEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// N_c: routed queries observed for `category`.
    pub fn category_count(&self, category: &CategoryId) -> u64 {
        self.category_counts.get(category).copied().unwrap_or(0)
    }

    pub fn category_counts(&self) -> &BTreeMap<CategoryId, u64> {
        &self.category_counts
    }

    pub(crate) fn increment_category(&mut self, category: &CategoryId) -> u64 {
        let n = self.category_counts.entry(category.clone()).or_insert(0);
        *n += 1;
        *n
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn advance_step(&mut self) {
        self.step += 1;
    }
}

/// A [`TrustStore`] behind a single reader-writer boundary.
///
/// Routing reads may overlap each other; updates take the exclusive side.
#[derive(Debug, Clone, Default)]
pub struct SharedTrustStore(Arc<RwLock<TrustStore>>);

impl SharedTrustStore {
    pub fn new(store: TrustStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, TrustStore> {
        self.0.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, TrustStore> {
        self.0.write()
    }

    pub fn snapshot(&self) -> TrustStore {
        self.0.read().clone()
    }
}
