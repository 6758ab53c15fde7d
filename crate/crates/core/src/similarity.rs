//! Answer representation, similarity against ground truth, and answer
//! extraction from free-form model output.

use std::collections::HashMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor for the denominator of the relative numeric error.
pub const NUMERIC_EPSILON: f64 = 1e-6;
/// Numeric answers at or above this similarity count as agreeing.
pub const NUMERIC_AGREEMENT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Choice,
    Numeric,
    Text,
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerKind::Choice => "choice",
            AnswerKind::Numeric => "numeric",
            AnswerKind::Text => "text",
        })
    }
}

/// A canonical answer. Choice answers hold the upper-case option label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Choice(String),
    Numeric(f64),
    Text(String),
}

impl Answer {
    pub fn choice(label: impl AsRef<str>) -> Self {
        Answer::Choice(label.as_ref().trim().to_ascii_uppercase())
    }

    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Choice(_) => AnswerKind::Choice,
            Answer::Numeric(_) => AnswerKind::Numeric,
            Answer::Text(_) => AnswerKind::Text,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Choice(l) => write!(f, "({l})"),
            Answer::Numeric(v) => write!(f, "{v}"),
            Answer::Text(t) => f.write_str(t),
        }
    }
}

/// Labels `A`, `B`, ... for `n` options.
pub fn option_labels(n: usize) -> Vec<String> {
    (0..n.min(26))
        .map(|i| char::from(b'A' + i as u8).to_string())
        .collect()
}

fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn token_f1(a: &str, b: &str) -> f64 {
    let ta = normalize_tokens(a);
    let tb = normalize_tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &ta {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / ta.len() as f64;
    let recall = common as f64 / tb.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Similarity in `[0, 1]` of `answer` to `truth`.
///
/// Choice: exact label match. Numeric: `max(0, 1 − |a − y| / max(|y|, ε))`,
/// which is relative to the truth and therefore not symmetric. Text: token F1
/// after lower-casing and dropping punctuation.
pub fn sim(answer: &Answer, truth: &Answer) -> Result<f64> {
    match (answer, truth) {
        (Answer::Choice(a), Answer::Choice(y)) => Ok(if a.eq_ignore_ascii_case(y) { 1.0 } else { 0.0 }),
        (Answer::Numeric(a), Answer::Numeric(y)) => {
            if !a.is_finite() || !y.is_finite() {
                return Ok(0.0);
            }
            let rel = (a - y).abs() / y.abs().max(NUMERIC_EPSILON);
            Ok((1.0 - rel).max(0.0))
        }
        (Answer::Text(a), Answer::Text(y)) => Ok(token_f1(a, y)),
        _ => Err(Error::ContractViolation(format!(
            "cannot compare a {} answer with a {} truth",
            answer.kind(),
            truth.kind()
        ))),
    }
}

/// Similarity of an optional answer; a missing answer scores 0.
pub fn sim_or_zero(answer: Option<&Answer>, truth: &Answer) -> f64 {
    answer.and_then(|a| sim(a, truth).ok()).unwrap_or(0.0)
}

/// Whether a fused answer counts as matching the ground truth.
pub fn agrees(answer: Option<&Answer>, truth: &Answer) -> bool {
    let s = sim_or_zero(answer, truth);
    match truth.kind() {
        AnswerKind::Numeric => s >= NUMERIC_AGREEMENT_THRESHOLD,
        AnswerKind::Choice | AnswerKind::Text => s == 1.0,
    }
}

static ANSWER_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer\s*:").expect("valid regex"));
static PAREN_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*([A-Za-z])\s*\)").expect("valid regex"));
static BARE_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Z])\b").expect("valid regex"));
static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").expect("valid regex")
});

fn after_marker(raw: &str) -> Option<&str> {
    ANSWER_MARKER.find(raw).map(|m| &raw[m.end()..])
}

fn find_choice(text: &str, valid: &dyn Fn(&str) -> bool) -> Option<String> {
    for cap in PAREN_LETTER.captures_iter(text) {
        let l = cap[1].to_ascii_uppercase();
        if valid(&l) {
            return Some(l);
        }
    }
    for cap in BARE_LETTER.captures_iter(text) {
        if valid(&cap[1]) {
            return Some(cap[1].to_string());
        }
    }
    None
}

fn find_number(text: &str) -> Option<f64> {
    NUMBER
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| v.is_finite())
}

/// Extracts an answer of `kind` from model output.
///
/// Text following an `Answer:` marker is searched first; the whole output is
/// the fallback. `options` bounds the valid choice labels.
pub fn parse_answer(raw: &str, kind: AnswerKind, options: Option<&[String]>) -> Result<Answer> {
    let fail = || Error::Parse {
        raw: raw.to_string(),
    };
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(fail());
    }
    let scoped = after_marker(trimmed);
    match kind {
        AnswerKind::Choice => {
            let labels = options.map(|o| option_labels(o.len()));
            let valid = |l: &str| match &labels {
                Some(ls) => ls.iter().any(|x| x == l),
                None => l.len() == 1,
            };
            scoped
                .and_then(|s| find_choice(s, &valid))
                .or_else(|| find_choice(trimmed, &valid))
                .map(Answer::Choice)
                .ok_or_else(fail)
        }
        AnswerKind::Numeric => scoped
            .and_then(find_number)
            .or_else(|| find_number(trimmed))
            .map(Answer::Numeric)
            .ok_or_else(fail),
        AnswerKind::Text => {
            let body = match scoped {
                Some(s) => s.trim_start().lines().next().unwrap_or("").trim(),
                None => trimmed,
            };
            if body.is_empty() {
                Err(fail())
            } else {
                Ok(Answer::Text(body.to_string()))
            }
        }
    }
}
