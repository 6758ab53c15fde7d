//! On-disk formats: trust snapshots (JSON), query streams (JSON lines) and
//! trajectory exports (CSV).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::orchestrator::{keyword_category, CategoryTaxonomy, StepResult};
use crate::query::{QueryItem, QueryRecord};
use crate::trust::{HyperParams, TrustEntry, TrustKey, TrustStore};

pub const SNAPSHOT_FORMAT_MAJOR: u32 = 1;
pub const SNAPSHOT_FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub agent_id: AgentId,
    pub role_id: RoleId,
    pub category_id: CategoryId,
    pub pos_count: f64,
    pub neg_count: f64,
    pub ema_short: f64,
    pub ema_long: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustSnapshot {
    pub format_version: String,
    pub hyperparams: HyperParams,
    pub step: u64,
    pub category_counts: BTreeMap<CategoryId, u64>,
    /// Sorted by (agent, role, category).
    pub entries: Vec<SnapshotEntry>,
}

impl TrustSnapshot {
    pub fn from_store(store: &TrustStore, params: &HyperParams) -> Self {
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION.to_string(),
            hyperparams: *params,
            step: store.step(),
            category_counts: store.category_counts().clone(),
            entries: store
                .iter()
                .map(|(k, e)| SnapshotEntry {
                    agent_id: k.agent.clone(),
                    role_id: k.role.clone(),
                    category_id: k.category.clone(),
                    pos_count: e.pos_count,
                    neg_count: e.neg_count,
                    ema_short: e.ema_short,
                    ema_long: e.ema_long,
                    score: e.score,
                })
                .collect(),
        }
    }

    pub fn into_store(self) -> std::result::Result<TrustStore, String> {
        let mut entries = BTreeMap::new();
        for e in self.entries {
            let vals = [e.pos_count, e.neg_count, e.ema_short, e.ema_long, e.score];
            if vals.iter().any(|v| !v.is_finite()) || e.pos_count <= 0.0 || e.neg_count <= 0.0 {
                return Err(format!(
                    "entry ({}, {}, {}) has invalid values",
                    e.agent_id, e.role_id, e.category_id
                ));
            }
            let key = TrustKey {
                agent: e.agent_id,
                role: e.role_id,
                category: e.category_id,
            };
            let entry = TrustEntry {
                pos_count: e.pos_count,
                neg_count: e.neg_count,
                ema_short: e.ema_short,
                ema_long: e.ema_long,
                score: e.score,
            };
            if entries.insert(key.clone(), entry).is_some() {
                return Err(format!(
                    "duplicate entry ({}, {}, {})",
                    key.agent, key.role, key.category
                ));
            }
        }
        Ok(TrustStore::from_parts(entries, self.category_counts, self.step))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial snapshot.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_snapshot(store: &TrustStore, params: &HyperParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, TrustSnapshot::from_store(store, params).to_json().as_bytes())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<TrustSnapshot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |e: serde_json::Error| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    // Check the version before the full schema so future formats get a clear
    // incompatibility error.
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(malformed)?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "missing format_version".into(),
        })?;
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major != Some(SNAPSHOT_FORMAT_MAJOR) {
        return Err(Error::IncompatibleVersion {
            path: path.to_path_buf(),
            found: version.to_string(),
            expected: SNAPSHOT_FORMAT_MAJOR,
        });
    }
    serde_json::from_str(&text).map_err(malformed)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<(TrustStore, HyperParams)> {
    let path = path.as_ref();
    let snap = read_snapshot(path)?;
    let params = snap.hyperparams;
    let store = snap.into_store().map_err(|message| Error::Malformed {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message,
    })?;
    Ok((store, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnInvalid {
    #[default]
    Abort,
    Skip,
}

/// Lazily parsed query stream, one JSON object per line. Blank lines are
/// ignored.
pub struct QueryStream<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl QueryStream<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(path, BufReader::new(f)))
    }
}

impl<R: BufRead> QueryStream<R> {
    pub fn new(path: impl Into<PathBuf>, reader: R) -> Self {
        Self {
            path: path.into(),
            lines: reader.lines(),
            line_no: 0,
        }
    }

    fn parse(&self, line: &str) -> Result<QueryItem> {
        let record: QueryRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: self.path.clone(),
            line: self.line_no,
            column: e.column(),
            message: e.to_string(),
        })?;
        let id = record.query_id.clone();
        record.into_item().map_err(|e| Error::InvalidRecord {
            path: self.path.clone(),
            line: self.line_no,
            id,
            message: e.to_string(),
        })
    }
}

impl<R: BufRead> Iterator for QueryStream<R> {
    type Item = Result<QueryItem>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

/// Reads a whole stream. With [`OnInvalid::Skip`] bad records are returned
/// separately instead of aborting; I/O errors always abort.
pub fn read_query_stream(
    path: impl AsRef<Path>,
    on_invalid: OnInvalid,
) -> Result<(Vec<QueryItem>, Vec<Error>)> {
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    for r in QueryStream::open(path.as_ref())? {
        match r {
            Ok(q) if !seen.insert(q.query_id.clone()) => {
                let e = Error::InvalidRecord {
                    path: path.as_ref().to_path_buf(),
                    line: items.len() + skipped.len() + 1,
                    id: q.query_id.clone(),
                    message: "duplicate query_id".into(),
                };
                match on_invalid {
                    OnInvalid::Abort => return Err(e),
                    OnInvalid::Skip => skipped.push(e),
                }
            }
            Ok(q) => items.push(q),
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => match on_invalid {
                OnInvalid::Abort => return Err(e),
                OnInvalid::Skip => skipped.push(e),
            },
        }
    }
    Ok((items, skipped))
}

pub fn write_query_stream(items: &[QueryItem], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for q in items {
        out.push_str(&serde_json::to_string(&QueryRecord::from(q)).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Category used for stratification: the hint, else the keyword rules,
/// else the taxonomy default.
pub fn stratum(item: &QueryItem, taxonomy: &CategoryTaxonomy) -> CategoryId {
    item.category_hint
        .clone()
        .or_else(|| keyword_category(&item.text, taxonomy))
        .unwrap_or_else(|| taxonomy.default_category.clone())
}

/// Picks up to `per_category` items from every category with a seeded
/// shuffle. Survivors keep their original stream order.
pub fn stratified_subsample(
    items: &[QueryItem],
    per_category: usize,
    seed: u64,
    taxonomy: &CategoryTaxonomy,
) -> Vec<QueryItem> {
    let mut by_cat: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
    for (i, q) in items.iter().enumerate() {
        by_cat.entry(stratum(q, taxonomy)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for idx in by_cat.values_mut() {
        idx.shuffle(&mut rng);
        keep.extend(idx.iter().take(per_category));
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| items[i].clone()).collect()
}

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "step",
    "query_id",
    "category",
    "agent_id",
    "role_id",
    "reward_raw",
    "reward_scaled",
    "posterior_mean",
    "ema_short",
    "ema_long",
    "score",
];

/// One updated triple at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub query_id: String,
    pub category: CategoryId,
    pub agent_id: AgentId,
    pub role_id: RoleId,
    pub reward_raw: f64,
    pub reward_scaled: f64,
    pub posterior_mean: f64,
    pub ema_short: f64,
    pub ema_long: f64,
    pub score: f64,
}

/// Rows for every update in `steps`. `step` is the store step at routing
/// time.
pub fn trajectory_rows(steps: &[StepResult]) -> Vec<TrajectoryRow> {
    steps
        .iter()
        .flat_map(|s| {
            s.updates.iter().map(move |u| TrajectoryRow {
                step: s.plan.step,
                query_id: s.query_id.clone(),
                category: u.key.category.clone(),
                agent_id: u.key.agent.clone(),
                role_id: u.key.role.clone(),
                reward_raw: u.reward.raw,
                reward_scaled: u.reward.scaled,
                posterior_mean: u.posterior_mean,
                ema_short: u.ema_short,
                ema_long: u.ema_long,
                score: u.score,
            })
        })
        .collect()
}

pub fn export_trajectories(rows: &[TrajectoryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::io(path, std::io::Error::other(e))))
        .collect()
}

/// Appends one JSON line per step (plan, evidence, answer, flags).
pub fn write_step_log(steps: &[StepResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in steps {
        out.push_str(&serde_json::to_string(s).expect("step serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
