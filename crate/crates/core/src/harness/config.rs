use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentPool, AgentSpec, BackendConfig, ChatClient, RemoteEndpoint};
use crate::error::{Error, Result};
use crate::ids::{CategoryId, RoleId};
use crate::orchestrator::{CategoryTaxonomy, Classifier, Mode, Orchestrator, Reasoner, DEFAULT_TRACE_BUDGET};
use crate::persistence::OnInvalid;
use crate::routing::RoleSet;
use crate::trust::HyperParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierConfig {
    #[default]
    Keyword,
    Remote(RemoteEndpoint),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerConfig {
    #[default]
    WeightedVote,
    Remote {
        endpoint: RemoteEndpoint,
        #[serde(default = "default_trace_budget")]
        trace_budget: usize,
    },
}

fn default_trace_budget() -> usize {
    DEFAULT_TRACE_BUDGET
}

/// Settings for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Seeded trials per configuration; trial seeds are `seed + i`.
    pub trials: u64,
    /// Optimization steps for the stage ablation.
    pub steps: usize,
    /// Optimization sizes for the sample-count sweep.
    pub sizes: Vec<usize>,
    /// Held-out queries scored with frozen trust after each trial.
    pub eval_queries: usize,
    /// Categories the synthetic stream draws from; empty means the taxonomy.
    pub categories: Vec<CategoryId>,
    /// Options per synthetic choice item.
    pub options: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            steps: 200,
            sizes: vec![50, 100, 150, 200, 300],
            eval_queries: 100,
            categories: Vec::new(),
            options: 4,
        }
    }
}

/// Everything a run needs. Parsed from TOML; command-line flags override
/// individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pool: Vec<AgentSpec>,
    #[serde(default = "default_roles")]
    pub roles: Vec<RoleId>,
    #[serde(default)]
    pub taxonomy: CategoryTaxonomy,
    #[serde(default)]
    pub hyperparams: HyperParams,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub reasoner: ReasonerConfig,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub stream: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_in: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_out: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Stratified subsample size per category; all items when absent.
    #[serde(default)]
    pub per_category: Option<usize>,
    #[serde(default)]
    pub on_invalid: OnInvalid,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn default_roles() -> Vec<RoleId> {
    RoleSet::canonical().roles().to_vec()
}

fn default_mode() -> Mode {
    Mode::Optimize
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_parallelism() -> usize {
    1
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stream: Option<PathBuf>,
    pub snapshot_in: Option<PathBuf>,
    pub snapshot_out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn with_pool(pool: Vec<AgentSpec>) -> Self {
        Self {
            pool,
            roles: default_roles(),
            taxonomy: CategoryTaxonomy::default(),
            hyperparams: HyperParams::default(),
            classifier: ClassifierConfig::default(),
            reasoner: ReasonerConfig::default(),
            mode: default_mode(),
            stream: None,
            snapshot_in: None,
            snapshot_out: None,
            out_dir: default_out_dir(),
            seed: 0,
            parallelism: default_parallelism(),
            per_category: None,
            on_invalid: OnInvalid::default(),
            simulate: SimulateConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.stream, &mut cfg.snapshot_in, &mut cfg.snapshot_out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.stream.is_some() {
            self.stream = o.stream;
        }
        if o.snapshot_in.is_some() {
            self.snapshot_in = o.snapshot_in;
        }
        if o.snapshot_out.is_some() {
            self.snapshot_out = o.snapshot_out;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.parallelism {
            self.parallelism = p;
        }
        if let Some(d) = o.out_dir {
            self.out_dir = d;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool.is_empty() {
            return Err(Error::Config("agent pool is empty".into()));
        }
        for spec in &self.pool {
            match &spec.backend {
                BackendConfig::Simulated(p) => p.validate()?,
                BackendConfig::Remote(e) => e.validate()?,
            }
        }
        RoleSet::new(self.roles.clone())?;
        self.taxonomy.validate()?;
        self.hyperparams.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.per_category == Some(0) {
            return Err(Error::Config("per_category must be >= 1".into()));
        }
        if let ClassifierConfig::Remote(e) = &self.classifier {
            e.validate()?;
        }
        if let ReasonerConfig::Remote { endpoint, .. } = &self.reasoner {
            endpoint.validate()?;
        }
        let sim = &self.simulate;
        if sim.trials == 0 || sim.steps == 0 || sim.sizes.contains(&0) {
            return Err(Error::Config("simulate trials, steps and sizes must be positive".into()));
        }
        if !(2..=26).contains(&sim.options) {
            return Err(Error::Config("simulate options must be within 2..=26".into()));
        }
        if let Some(c) = sim.categories.iter().find(|c| !self.taxonomy.contains(c)) {
            return Err(Error::Config(format!("simulate category {c} is not in the taxonomy")));
        }
        Ok(())
    }

    pub fn role_set(&self) -> Result<RoleSet> {
        RoleSet::new(self.roles.clone())
    }

    /// Builds the orchestrator described by this config, with `params`
    /// in place of the configured hyperparameters.
    pub fn orchestrator_with(&self, params: HyperParams) -> Result<Orchestrator> {
        let pool = AgentPool::from_specs(&self.pool)?;
        let mut orch = Orchestrator::new(pool, params);
        orch.roles = self.role_set()?;
        orch.taxonomy = self.taxonomy.clone();
        orch.classifier = match &self.classifier {
            ClassifierConfig::Keyword => Classifier::Keyword,
            ClassifierConfig::Remote(e) => Classifier::Remote(ChatClient::new(e.clone())?),
        };
        orch.reasoner = match &self.reasoner {
            ReasonerConfig::WeightedVote => Reasoner::WeightedVote,
            ReasonerConfig::Remote {
                endpoint,
                trace_budget,
            } => Reasoner::Remote {
                client: ChatClient::new(endpoint.clone())?,
                trace_budget: *trace_budget,
            },
        };
        Ok(orch)
    }

    pub fn orchestrator(&self) -> Result<Orchestrator> {
        self.orchestrator_with(self.hyperparams)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        seed = 3
        stream = "q.jsonl"
        per_category = 30

        [hyperparams]
        beta = 7.0

        [[pool]]
        id = "a"
        [pool.backend.simulated]
        default_accuracy = 0.6

        [[pool]]
        id = "b"
        [pool.backend.simulated]
        default_accuracy = 0.4
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.pool.len(), 2);
        assert_eq!(cfg.hyperparams.beta, 7.0);
        assert_eq!(cfg.hyperparams.kappa, 0.5);
        assert_eq!(cfg.roles.len(), 3);
        assert_eq!(cfg.classifier, ClassifierConfig::Keyword);
        assert_eq!(cfg.simulate.sizes, vec![50, 100, 150, 200, 300]);
    }

    #[test]
    fn flags_win() {
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.apply(Overrides {
            seed: Some(9),
            stream: Some("other.jsonl".into()),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.stream.unwrap(), PathBuf::from("other.jsonl"));
        assert_eq!(cfg.per_category, Some(30));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            RunConfig::from_toml("pool = []\nbogus = 1"),
            Err(Error::Config(_))
        ));
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.hyperparams.lambda_g = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.parallelism = 0;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml("pool = []").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, SAMPLE).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.stream.unwrap(), dir.path().join("q.jsonl"));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
    }
}
