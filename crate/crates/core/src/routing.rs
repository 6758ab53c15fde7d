//! Per-query agent selection, role assignment and role weights.
//!
//! Every ordering decision has a fixed tie-break chain so plans are
//! reproducible: score, then aggregate score, then agent id, then role order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::trust::{HyperParams, TrustStore};

pub const IMPLICIT_VISUAL: &str = "implicit_visual";
pub const EXPLICIT_3D: &str = "explicit_3d";
pub const SCENE_GRAPH: &str = "scene_graph";

/// Ordered roles. Position in the list is the role tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleSet(Vec<RoleId>);

impl RoleSet {
    pub fn new(roles: Vec<RoleId>) -> Result<Self> {
        let unique: BTreeSet<_> = roles.iter().collect();
        if unique.len() != roles.len() {
            return Err(Error::Config("duplicate role in role set".into()));
        }
        Ok(Self(roles))
    }

    pub fn canonical() -> Self {
        Self(vec![
            IMPLICIT_VISUAL.into(),
            EXPLICIT_3D.into(),
            SCENE_GRAPH.into(),
        ])
    }

    pub fn roles(&self) -> &[RoleId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, role: &RoleId) -> bool {
        self.0.contains(role)
    }

    pub fn position(&self, role: &RoleId) -> Option<usize> {
        self.0.iter().position(|r| r == role)
    }
}

impl Default for RoleSet {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub agent: AgentId,
    pub role: RoleId,
    /// Softmax weight of `role` among this agent's own role scores.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub category: CategoryId,
    /// Ordered by role order.
    pub assignments: Vec<Assignment>,
    pub step: u64,
}

impl RoutingPlan {
    pub fn role_of(&self, agent: &AgentId) -> Option<&RoleId> {
        self.assignments
            .iter()
            .find(|a| &a.agent == agent)
            .map(|a| &a.role)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Mean score of `agent` over all roles in `category`.
pub fn aggregate_score(
    store: &TrustStore,
    agent: &AgentId,
    category: &CategoryId,
    roles: &RoleSet,
) -> Result<f64> {
    if roles.is_empty() {
        return Err(Error::InputDomain("role set is empty".into()));
    }
    let sum: f64 = roles
        .roles()
        .iter()
        .map(|r| store.score(agent, r, category))
        .sum();
    Ok(sum / roles.len() as f64)
}

fn check_pool(pool: &[AgentId]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::InputDomain("agent pool is empty".into()));
    }
    let unique: BTreeSet<_> = pool.iter().collect();
    if unique.len() != pool.len() {
        return Err(Error::InputDomain("agent pool contains duplicate ids".into()));
    }
    Ok(())
}

/// The `k` agents with the highest aggregate score, best first.
pub fn select_topk(
    store: &TrustStore,
    pool: &[AgentId],
    category: &CategoryId,
    roles: &RoleSet,
    k: usize,
) -> Result<Vec<AgentId>> {
    check_pool(pool)?;
    if k == 0 {
        return Err(Error::InputDomain("k must be at least 1".into()));
    }
    let mut ranked = pool
        .iter()
        .map(|a| Ok((aggregate_score(store, a, category, roles)?, a)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.cmp(b)));
    Ok(ranked.into_iter().take(k).map(|(_, a)| a.clone()).collect())
}

/// Greedy global matching of agents to roles.
///
/// Repeatedly takes the highest-scoring free (agent, role) pair. The result
/// covers `min(|selected|, |roles|)` pairs and is returned in role order.
pub fn assign_roles(
    store: &TrustStore,
    selected: &[AgentId],
    category: &CategoryId,
    roles: &RoleSet,
) -> Result<Vec<(AgentId, RoleId)>> {
    if selected.is_empty() {
        return Err(Error::InputDomain("no agents selected".into()));
    }
    check_pool(selected)?;
    let aggregates = selected
        .iter()
        .map(|a| aggregate_score(store, a, category, roles))
        .collect::<Result<Vec<_>>>()?;

    struct Cand {
        agent: usize,
        role: usize,
        score: f64,
    }
    let mut cands: Vec<Cand> = Vec::with_capacity(selected.len() * roles.len());
    for (ai, agent) in selected.iter().enumerate() {
        for (ri, role) in roles.roles().iter().enumerate() {
            cands.push(Cand {
                agent: ai,
                role: ri,
                score: store.score(agent, role, category),
            });
        }
    }
    // Best candidate first.
    cands.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then_with(|| aggregates[y.agent].total_cmp(&aggregates[x.agent]))
            .then_with(|| selected[x.agent].cmp(&selected[y.agent]))
            .then_with(|| x.role.cmp(&y.role))
    });

    let pairs = selected.len().min(roles.len());
    let mut agent_taken = vec![false; selected.len()];
    let mut role_taken: Vec<Option<usize>> = vec![None; roles.len()];
    let mut placed = 0;
    for c in &cands {
        if placed == pairs {
            break;
        }
        if agent_taken[c.agent] || role_taken[c.role].is_some() {
            continue;
        }
        agent_taken[c.agent] = true;
        role_taken[c.role] = Some(c.agent);
        placed += 1;
    }
    Ok(role_taken
        .into_iter()
        .enumerate()
        .filter_map(|(ri, a)| a.map(|ai| (selected[ai].clone(), roles.roles()[ri].clone())))
        .collect())
}

/// Softmax of `beta · score` over the agent's roles, in role order.
pub fn role_weights(
    store: &TrustStore,
    agent: &AgentId,
    category: &CategoryId,
    roles: &RoleSet,
    beta: f64,
) -> Result<Vec<f64>> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InputDomain(format!("beta = {beta} must be >= 0")));
    }
    let scores: Vec<f64> = roles
        .roles()
        .iter()
        .map(|r| store.score(agent, r, category))
        .collect();
    Ok(softmax(&scores, beta))
}

pub(crate) fn softmax(scores: &[f64], beta: f64) -> Vec<f64> {
    let max = scores
        .iter()
        .map(|s| beta * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (beta * s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Builds a plan without touching the store. Used for frozen evaluation.
pub fn plan_routing(
    store: &TrustStore,
    pool: &[AgentId],
    category: &CategoryId,
    roles: &RoleSet,
    params: &HyperParams,
) -> Result<RoutingPlan> {
    let selected = select_topk(store, pool, category, roles, params.top_k)?;
    let pairs = assign_roles(store, &selected, category, roles)?;
    let mut assignments = Vec::with_capacity(pairs.len());
    for (agent, role) in pairs {
        let weights = role_weights(store, &agent, category, roles, params.beta)?;
        let idx = roles.position(&role).expect("assigned role comes from the role set");
        assignments.push(Assignment {
            weight: weights[idx],
            agent,
            role,
        });
    }
    Ok(RoutingPlan {
        category: category.clone(),
        assignments,
        step: store.step(),
    })
}

/// Counts the query toward N_c for `category`, then plans.
///
/// The increment happens first so the current query is included in the ramp
/// of its own update.
pub fn build_routing_plan(
    store: &mut TrustStore,
    pool: &[AgentId],
    category: &CategoryId,
    roles: &RoleSet,
    params: &HyperParams,
) -> Result<RoutingPlan> {
    check_pool(pool)?;
    if roles.is_empty() {
        return Err(Error::InputDomain("role set is empty".into()));
    }
    store.increment_category(category);
    plan_routing(store, pool, category, roles, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::TrustKey;
    use approx::assert_abs_diff_eq;

    fn ids(names: &[&str]) -> Vec<AgentId> {
        names.iter().map(|n| AgentId::from(*n)).collect()
    }

    fn store_with(scores: &[(&str, &str, f64)], category: &str) -> TrustStore {
        let mut store = TrustStore::new();
        for (a, r, s) in scores {
            store
                .entry_mut(TrustKey::new(*a, *r, category))
                .score = *s;
        }
        store
    }

    fn roles3() -> RoleSet {
        RoleSet::new(vec!["r1".into(), "r2".into(), "r3".into()]).unwrap()
    }

    #[test]
    fn canonical_roles_in_documented_order() {
        let roles = RoleSet::canonical();
        let names: Vec<_> = roles.roles().iter().map(|r| r.as_str()).collect();
        assert_eq!(names, ["implicit_visual", "explicit_3d", "scene_graph"]);
    }

    #[test]
    fn aggregate_examples() {
        let c: CategoryId = "c".into();
        let roles = roles3();
        let fresh = TrustStore::new();
        assert_eq!(aggregate_score(&fresh, &"a".into(), &c, &roles).unwrap(), 0.5);
        let s = store_with(&[("a", "r1", 0.9), ("a", "r2", 0.5), ("a", "r3", 0.1)], "c");
        assert_abs_diff_eq!(
            aggregate_score(&s, &"a".into(), &c, &roles).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let s = store_with(&[("a", "r1", 0.8), ("a", "r2", 0.6), ("a", "r3", 0.7)], "c");
        assert_abs_diff_eq!(
            aggregate_score(&s, &"a".into(), &c, &roles).unwrap(),
            0.7,
            epsilon = 1e-15
        );
        let empty = RoleSet::new(vec![]).unwrap();
        assert!(matches!(
            aggregate_score(&fresh, &"a".into(), &c, &empty),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn topk_examples() {
        let c: CategoryId = "c".into();
        let single = RoleSet::new(vec!["r".into()]).unwrap();
        let s = store_with(
            &[
                ("a1", "r", 0.7),
                ("a2", "r", 0.5),
                ("a3", "r", 0.5),
                ("a4", "r", 0.6),
                ("a5", "r", 0.4),
            ],
            "c",
        );
        let pool = ids(&["a5", "a3", "a1", "a4", "a2"]);
        assert_eq!(
            select_topk(&s, &pool, &c, &single, 3).unwrap(),
            ids(&["a1", "a4", "a2"])
        );
        assert_eq!(select_topk(&s, &pool, &c, &single, 1).unwrap(), ids(&["a1"]));
        let fresh = TrustStore::new();
        assert_eq!(
            select_topk(&fresh, &pool, &c, &single, 2).unwrap(),
            ids(&["a1", "a2"])
        );
        assert_eq!(select_topk(&fresh, &pool, &c, &single, 10).unwrap().len(), 5);
        assert!(select_topk(&fresh, &[], &c, &single, 3).is_err());
        assert!(select_topk(&fresh, &pool, &c, &single, 0).is_err());
    }

    #[test]
    fn greedy_assignment_example() {
        let c: CategoryId = "c".into();
        let s = store_with(
            &[
                ("A", "r1", 0.9),
                ("A", "r2", 0.2),
                ("A", "r3", 0.2),
                ("B", "r1", 0.8),
                ("B", "r2", 0.7),
                ("B", "r3", 0.1),
                ("C", "r1", 0.1),
                ("C", "r2", 0.1),
                ("C", "r3", 0.6),
            ],
            "c",
        );
        let got = assign_roles(&s, &ids(&["A", "B", "C"]), &c, &roles3()).unwrap();
        let expected: Vec<(AgentId, RoleId)> = vec![
            ("A".into(), "r1".into()),
            ("B".into(), "r2".into()),
            ("C".into(), "r3".into()),
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn equal_scores_assign_by_rank() {
        let c: CategoryId = "c".into();
        let got = assign_roles(&TrustStore::new(), &ids(&["x", "y", "z"]), &c, &roles3()).unwrap();
        let roles: Vec<_> = got.iter().map(|(a, r)| (a.as_str(), r.as_str())).collect();
        assert_eq!(roles, [("x", "r1"), ("y", "r2"), ("z", "r3")]);
    }

    #[test]
    fn single_agent_gets_its_best_role() {
        let c: CategoryId = "c".into();
        let s = store_with(&[("A", "r1", 0.2), ("A", "r2", 0.4), ("A", "r3", 0.9)], "c");
        let got = assign_roles(&s, &ids(&["A"]), &c, &roles3()).unwrap();
        assert_eq!(got, vec![("A".into(), "r3".into())]);
    }

    #[test]
    fn softmax_examples() {
        let c: CategoryId = "c".into();
        let roles = roles3();
        let fresh = TrustStore::new();
        for beta in [0.0, 1.0, 5.0, 500.0] {
            let w = role_weights(&fresh, &"a".into(), &c, &roles, beta).unwrap();
            for x in w {
                assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
        let s = store_with(&[("a", "r1", 1.0), ("a", "r2", 0.5), ("a", "r3", 0.0)], "c");
        let w = role_weights(&s, &"a".into(), &c, &roles, 5.0).unwrap();
        // e^5, e^2.5, e^0 normalized.
        let z = 5f64.exp() + 2.5f64.exp() + 1.0;
        assert_abs_diff_eq!(w[0], 5f64.exp() / z, epsilon = 1e-12);
        assert_abs_diff_eq!(w[0], 0.9184, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.0754, epsilon = 1e-4);
        assert_abs_diff_eq!(w[2], 0.0062, epsilon = 1e-4);
        let w = role_weights(&s, &"a".into(), &c, &roles, 0.0).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        assert!(role_weights(&s, &"a".into(), &c, &roles, -1.0).is_err());
    }

    #[test]
    fn softmax_survives_huge_beta() {
        let w = softmax(&[1.0, 0.5, 0.0], 1e6);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn cold_start_plan() {
        let mut store = TrustStore::new();
        let pool = ids(&["d", "b", "a", "c"]);
        let plan = build_routing_plan(
            &mut store,
            &pool,
            &"size".into(),
            &RoleSet::canonical(),
            &HyperParams::default(),
        )
        .unwrap();
        let got: Vec<_> = plan
            .assignments
            .iter()
            .map(|a| (a.agent.as_str(), a.role.as_str()))
            .collect();
        assert_eq!(
            got,
            [
                ("a", "implicit_visual"),
                ("b", "explicit_3d"),
                ("c", "scene_graph")
            ]
        );
        assert!(plan
            .assignments
            .iter()
            .all(|a| (a.weight - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(store.category_count(&"size".into()), 1);
    }

    #[test]
    fn small_pool_leaves_role_unmatched() {
        let mut store = TrustStore::new();
        let plan = build_routing_plan(
            &mut store,
            &ids(&["a", "b"]),
            &"c".into(),
            &RoleSet::canonical(),
            &HyperParams::default(),
        )
        .unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan.role_of(&"a".into()).is_some());
    }

    #[test]
    fn planning_rejects_empty_pool_without_counting() {
        let mut store = TrustStore::new();
        let err = build_routing_plan(
            &mut store,
            &[],
            &"c".into(),
            &RoleSet::canonical(),
            &HyperParams::default(),
        );
        assert!(err.is_err());
        assert_eq!(store.category_count(&"c".into()), 0);
    }
}
