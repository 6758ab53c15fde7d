//! Agents with a known per-(role, category) accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvidenceRecord;
use crate::error::{Error, Result};
use crate::ids::{AgentId, CategoryId, RoleId};
use crate::query::QueryItem;
use crate::routing::{EXPLICIT_3D, SCENE_GRAPH};
use crate::similarity::{parse_answer, Answer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyCell {
    pub role: RoleId,
    pub category: CategoryId,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityProfile {
    #[serde(default)]
    pub accuracy: Vec<AccuracyCell>,
    /// Accuracy for cells not listed. Without it a missing cell is an error.
    #[serde(default)]
    pub default_accuracy: Option<f64>,
    /// Size of the wrong-answer space for free-text items.
    #[serde(default = "default_distractors")]
    pub distractor_count: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_distractors() -> u32 {
    3
}

impl ReliabilityProfile {
    pub fn uniform(p: f64, seed: u64) -> Self {
        Self {
            accuracy: Vec::new(),
            default_accuracy: Some(p),
            distractor_count: default_distractors(),
            seed,
        }
    }

    pub fn with_cell(mut self, role: &str, category: &str, p: f64) -> Self {
        self.accuracy.retain(|c| !(c.role.as_str() == role && c.category.as_str() == category));
        self.accuracy.push(AccuracyCell {
            role: role.into(),
            category: category.into(),
            p,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if self.accuracy.iter().any(|c| !ok(c.p)) || self.default_accuracy.is_some_and(|p| !ok(p)) {
            return Err(Error::Config("profile accuracies must lie in [0, 1]".into()));
        }
        if self.distractor_count == 0 {
            return Err(Error::Config("distractor_count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn accuracy(&self, role: &RoleId, category: &CategoryId) -> Result<f64> {
        self.accuracy
            .iter()
            .find(|c| &c.role == role && &c.category == category)
            .map(|c| c.p)
            .or(self.default_accuracy)
            .ok_or_else(|| {
                Error::Config(format!("profile has no accuracy for ({role}, {category})"))
            })
    }
}

/// Per-query RNG seed from (profile seed, agent, role, query id).
///
/// Keyed on the query id rather than its stream position, so evaluation is
/// independent of stream order and of execution interleaving.
fn stream_seed(seed: u64, agent: &AgentId, role: &RoleId, query_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [agent.as_str(), role.as_str(), query_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn wrong_answer(rng: &mut ChaCha8Rng, query: &QueryItem, truth: &Answer, distractors: u32) -> Answer {
    match truth {
        Answer::Choice(label) => {
            let wrong: Vec<String> = query
                .option_labels()
                .into_iter()
                .filter(|l| l != label)
                .collect();
            Answer::Choice(wrong[rng.random_range(0..wrong.len())].clone())
        }
        Answer::Numeric(y) => {
            let u = rng.random_range(0.3..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if *y == 0.0 {
                Answer::Numeric(sign * u)
            } else {
                Answer::Numeric(y * (1.0 + sign * u))
            }
        }
        Answer::Text(_) => {
            let j = rng.random_range(0..distractors);
            Answer::Text(format!("distractor {j}"))
        }
    }
}

fn render_reply(role: &RoleId, answer: &Answer, correct: bool) -> String {
    let tools = match role.as_str() {
        EXPLICIT_3D => "## Tool 3.  Object Depth Values  (simulated, normalised z)\n",
        SCENE_GRAPH => "## Scene Graph (JSON)\n{\"nodes\": [], \"edges\": []}\n",
        _ => "",
    };
    let answer = match answer {
        Answer::Choice(l) => format!("({l})"),
        other => other.to_string(),
    };
    let reason = if correct {
        "evidence consistent with the reference object"
    } else {
        "cues were ambiguous"
    };
    format!("{tools}Answer: {answer}\nReason: {reason}.")
}

/// Draws one simulated answer. The reply goes through the same parser as a
/// remote reply would.
pub fn execute_simulated(
    agent: &AgentId,
    profile: &ReliabilityProfile,
    role: &RoleId,
    category: &CategoryId,
    query: &QueryItem,
) -> Result<EvidenceRecord> {
    let truth = query.ground_truth.as_ref().ok_or_else(|| {
        Error::ContractViolation(format!(
            "simulated agent needs ground truth for {}",
            query.query_id
        ))
    })?;
    let p = profile.accuracy(role, category)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(profile.seed, agent, role, &query.query_id));
    let correct = rng.random::<f64>() < p;
    let answer = if correct {
        truth.clone()
    } else {
        wrong_answer(&mut rng, query, truth, profile.distractor_count)
    };
    let trace = render_reply(role, &answer, correct);
    let parsed = parse_answer(&trace, query.answer_kind, query.options.as_deref()).ok();
    Ok(EvidenceRecord {
        agent: agent.clone(),
        role: role.clone(),
        answer: parsed,
        trace,
        latency_secs: 0.0,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{sim, AnswerKind};

    fn choice_query(id: &str) -> QueryItem {
        QueryItem {
            query_id: id.into(),
            text: "How many mugs?".into(),
            image_ref: None,
            category_hint: None,
            answer_kind: AnswerKind::Choice,
            options: Some(vec!["1".into(), "2".into(), "3".into(), "4".into()]),
            ground_truth: Some(Answer::choice("C")),
        }
    }

    fn run(p: f64, q: &QueryItem) -> EvidenceRecord {
        let profile = ReliabilityProfile::uniform(p, 7);
        execute_simulated(&"a".into(), &profile, &"r".into(), &"counting".into(), q).unwrap()
    }

    #[test]
    fn perfect_and_hopeless_agents() {
        for i in 0..200 {
            let q = choice_query(&format!("q{i}"));
            assert_eq!(run(1.0, &q).answer, q.ground_truth);
            let wrong = run(0.0, &q).answer.unwrap();
            assert_ne!(Some(wrong.clone()), q.ground_truth);
            assert!(q.option_labels().contains(&match wrong {
                Answer::Choice(l) => l,
                _ => unreachable!(),
            }));
        }
    }

    #[test]
    fn empirical_accuracy_concentrates() {
        let hits = (0..1000)
            .filter(|i| {
                let q = choice_query(&format!("q{i}"));
                run(0.8, &q).answer == q.ground_truth
            })
            .count();
        let acc = hits as f64 / 1000.0;
        assert!((acc - 0.8).abs() <= 0.03, "accuracy {acc}");
    }

    #[test]
    fn deterministic_per_query() {
        let q = choice_query("same");
        assert_eq!(run(0.5, &q), run(0.5, &q));
    }

    #[test]
    fn wrong_numeric_answers_stay_below_point_seven() {
        let profile = ReliabilityProfile::uniform(0.0, 3);
        for i in 0..500 {
            let q = QueryItem {
                query_id: format!("n{i}"),
                text: "how far".into(),
                image_ref: None,
                category_hint: None,
                answer_kind: AnswerKind::Numeric,
                options: None,
                ground_truth: Some(Answer::Numeric(4.25)),
            };
            let rec =
                execute_simulated(&"a".into(), &profile, &"r".into(), &"c".into(), &q).unwrap();
            let s = sim(rec.answer.as_ref().unwrap(), q.ground_truth.as_ref().unwrap()).unwrap();
            assert!(s <= 0.7 + 1e-12, "sim {s}");
        }
    }

    #[test]
    fn missing_cell_is_config_error() {
        let profile = ReliabilityProfile {
            default_accuracy: None,
            ..ReliabilityProfile::uniform(0.5, 0)
        }
        .with_cell("r", "size", 0.9);
        let q = choice_query("q");
        assert!(matches!(
            execute_simulated(&"a".into(), &profile, &"r".into(), &"counting".into(), &q),
            Err(Error::Config(_))
        ));
        assert!(execute_simulated(&"a".into(), &profile, &"r".into(), &"size".into(), &q).is_ok());
    }

    #[test]
    fn needs_ground_truth() {
        let mut q = choice_query("q");
        q.ground_truth = None;
        assert!(execute_simulated(
            &"a".into(),
            &ReliabilityProfile::uniform(1.0, 0),
            &"r".into(),
            &"c".into(),
            &q
        )
        .is_err());
    }
}
