//! Agent backends and the pool they are drawn from.

pub mod prompts;
pub mod remote;
pub mod simulated;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::query::QueryItem;
use crate::similarity::Answer;

pub use remote::{execute_remote, ChatClient, RemoteEndpoint, RetryPolicy};
pub use simulated::{execute_simulated, AccuracyCell, ReliabilityProfile};

/// One specialist's contribution to the evidence pool for a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub agent: AgentId,
    pub role: RoleId,
    /// `None` when nothing could be extracted; scores similarity 0.
    pub answer: Option<Answer>,
    pub trace: String,
    pub latency_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvidenceRecord {
    pub fn failed(agent: AgentId, role: RoleId, error: &Error) -> Self {
        Self {
            agent,
            role,
            answer: None,
            trace: String::new(),
            latency_secs: 0.0,
            error: Some(error.to_string()),
        }
    }
}

/// Something that answers a query under a role.
pub trait AgentBackend: Send + Sync {
    fn execute(
        &self,
        agent: &AgentId,
        role: &RoleId,
        category: &CategoryId,
        query: &QueryItem,
    ) -> Result<EvidenceRecord>;

    fn is_simulated(&self) -> bool {
        false
    }
}

pub struct SimulatedBackend(pub ReliabilityProfile);

impl AgentBackend for SimulatedBackend {
    fn execute(
        &self,
        agent: &AgentId,
        role: &RoleId,
        category: &CategoryId,
        query: &QueryItem,
    ) -> Result<EvidenceRecord> {
        execute_simulated(agent, &self.0, role, category, query)
    }

    fn is_simulated(&self) -> bool {
        true
    }
}

pub struct RemoteBackend(pub ChatClient);

impl AgentBackend for RemoteBackend {
    fn execute(
        &self,
        agent: &AgentId,
        role: &RoleId,
        _category: &CategoryId,
        query: &QueryItem,
    ) -> Result<EvidenceRecord> {
        let prompt = prompts::render_role_prompt(role, query)?;
        execute_remote(&self.0, agent, role, &prompt, query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendConfig {
    Simulated(ReliabilityProfile),
    Remote(RemoteEndpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    #[serde(default)]
    pub display_name: Option<String>,
    pub backend: BackendConfig,
}

impl AgentSpec {
    pub fn simulated(id: &str, profile: ReliabilityProfile) -> Self {
        Self {
            id: id.into(),
            display_name: None,
            backend: BackendConfig::Simulated(profile),
        }
    }

    pub fn remote(id: &str, endpoint: RemoteEndpoint) -> Self {
        Self {
            id: id.into(),
            display_name: None,
            backend: BackendConfig::Remote(endpoint),
        }
    }
}

#[derive(Clone)]
pub struct Agent {
    pub id: AgentId,
    pub display_name: String,
    pub backend: Arc<dyn AgentBackend>,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("id", &self.id)
            .field("display_name", &self.display_name)
            .field("simulated", &self.backend.is_simulated())
            .finish()
    }
}

impl Agent {
    pub fn new(id: impl Into<AgentId>, backend: Arc<dyn AgentBackend>) -> Self {
        let id = id.into();
        Self {
            display_name: id.to_string(),
            id,
            backend,
        }
    }

    pub fn from_spec(spec: &AgentSpec) -> Result<Self> {
        let backend: Arc<dyn AgentBackend> = match &spec.backend {
            BackendConfig::Simulated(p) => {
                p.validate()?;
                Arc::new(SimulatedBackend(p.clone()))
            }
            BackendConfig::Remote(e) => Arc::new(RemoteBackend(ChatClient::new(e.clone())?)),
        };
        Ok(Self {
            id: spec.id.clone(),
            display_name: spec.display_name.clone().unwrap_or_else(|| spec.id.to_string()),
            backend,
        })
    }
}

/// Agents with unique ids, kept in id order.
#[derive(Debug, Clone)]
pub struct AgentPool {
    agents: Vec<Agent>,
}

impl AgentPool {
    pub fn new(mut agents: Vec<Agent>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::Config("agent pool is empty".into()));
        }
        let ids: BTreeSet<_> = agents.iter().map(|a| &a.id).collect();
        if ids.len() != agents.len() {
            return Err(Error::Config("agent ids must be unique within a pool".into()));
        }
        agents.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { agents })
    }

    pub fn from_specs(specs: &[AgentSpec]) -> Result<Self> {
        Self::new(specs.iter().map(Agent::from_spec).collect::<Result<_>>()?)
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn get(&self, id: &AgentId) -> Option<&Agent> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn all_simulated(&self) -> bool {
        self.agents.iter().all(|a| a.backend.is_simulated())
    }
}
