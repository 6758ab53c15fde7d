//! Test-time trust estimation and trust-weighted routing for pools of
//! answer-producing agents.
//!
//! Each query is classified into a category, routed to the top-k agents by
//! trust (one role per agent), answered, fused by a weighted vote or a
//! reasoner model, and, when ground truth is known, fed back into the
//! per-(agent, role, category) trust store. No agent is ever retrained.

pub mod agents;
pub mod error;
pub mod harness;
pub mod ids;
pub mod orchestrator;
pub mod persistence;
pub mod query;
pub mod routing;
pub mod similarity;
pub mod trust;

pub use error::{Error, Result};
pub use ids::{AgentId, CategoryId, RoleId};
pub use orchestrator::{Mode, Orchestrator, StepResult};
pub use query::QueryItem;
pub use routing::{RoleSet, RoutingPlan};
pub use similarity::{Answer, AnswerKind};
pub use trust::{HyperParams, SharedTrustStore, TrustEntry, TrustKey, TrustStore};
