use std::collections::BTreeMap;

use crate::agents::prompts::render_reasoning_prompt;
use crate::agents::{ChatClient, EvidenceRecord};
use crate::error::{Error, Result};
use crate::query::QueryItem;
use crate::routing::RoutingPlan;
use crate::similarity::{parse_answer, Answer};

const TIE_EPS: f64 = 1e-12;
pub const DEFAULT_TRACE_BUDGET: usize = 4096;

#[derive(Debug, Default)]
pub enum Reasoner {
    #[default]
    WeightedVote,
    Remote {
        client: ChatClient,
        /// Per-trace byte cap in the reasoner prompt.
        trace_budget: usize,
    },
}

struct Ballot<'a> {
    answer: &'a Answer,
    weight: f64,
    /// Position in the plan; final tie-break.
    order: usize,
}

fn ballots<'a>(plan: &RoutingPlan, evidence: &'a [EvidenceRecord]) -> Vec<Ballot<'a>> {
    evidence
        .iter()
        .filter_map(|r| {
            let answer = r.answer.as_ref()?;
            let (order, a) = plan
                .assignments
                .iter()
                .enumerate()
                .find(|(_, a)| a.agent == r.agent)?;
            Some(Ballot {
                answer,
                weight: a.weight,
                order,
            })
        })
        .collect()
}

/// The ballot of the heaviest single voter among `candidates`.
fn heaviest<'a, 'b>(candidates: impl Iterator<Item = &'b Ballot<'a>>) -> Option<&'b Ballot<'a>>
where
    'a: 'b,
{
    candidates.min_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| x.order.cmp(&y.order))
    })
}

fn vote_key(a: &Answer) -> String {
    match a {
        Answer::Choice(l) => l.to_ascii_uppercase(),
        Answer::Text(t) => t
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        Answer::Numeric(v) => v.to_string(),
    }
}

fn plurality(ballots: &[Ballot<'_>]) -> Option<Answer> {
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for b in ballots {
        *totals.entry(vote_key(b.answer)).or_default() += b.weight;
    }
    let best = totals.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<&String> = totals
        .iter()
        .filter(|(_, w)| best - **w <= TIE_EPS)
        .map(|(k, _)| k)
        .collect();
    heaviest(ballots.iter().filter(|b| leaders.contains(&&vote_key(b.answer))))
        .map(|b| b.answer.clone())
}

fn weighted_median(ballots: &[Ballot<'_>]) -> Option<Answer> {
    let mut points: Vec<(f64, &Ballot<'_>)> = ballots
        .iter()
        .filter_map(|b| match b.answer {
            Answer::Numeric(v) if v.is_finite() => Some((*v, b)),
            _ => None,
        })
        .collect();
    if points.is_empty() {
        return None;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = points.iter().map(|(_, b)| b.weight).sum();
    let half = total / 2.0;
    let mut cum = 0.0;
    for (i, (v, _)) in points.iter().enumerate() {
        cum += points[i].1.weight;
        if cum + TIE_EPS < half {
            continue;
        }
        // Exactly half the mass on each side: two medians, pick the one
        // backed by the heaviest voter.
        if (cum - half).abs() <= TIE_EPS {
            if let Some((upper, _)) = points[i + 1..].iter().find(|(u, _)| u > v) {
                let upper = *upper;
                let lo = heaviest(points.iter().filter(|(x, _)| x == v).map(|(_, b)| *b));
                let hi = heaviest(points.iter().filter(|(x, _)| *x == upper).map(|(_, b)| *b));
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    let pick_hi = hi.weight > lo.weight + TIE_EPS
                        || ((hi.weight - lo.weight).abs() <= TIE_EPS && hi.order < lo.order);
                    return Some(Answer::Numeric(if pick_hi { upper } else { *v }));
                }
            }
        }
        return Some(Answer::Numeric(*v));
    }
    points.last().map(|(v, _)| Answer::Numeric(*v))
}

/// Weight-majority vote over the answered records.
///
/// Choice and text answers go to the answer with the largest total weight;
/// numeric answers to the weighted median. Ties go to the answer of the
/// heaviest single agent. `None` if no record carries an answer.
pub fn weighted_vote(plan: &RoutingPlan, evidence: &[EvidenceRecord]) -> Option<Answer> {
    let ballots = ballots(plan, evidence);
    if ballots.is_empty() {
        return None;
    }
    match ballots[0].answer {
        Answer::Numeric(_) => weighted_median(&ballots),
        _ => plurality(&ballots),
    }
}

fn truncate(s: &str, budget: usize) -> &str {
    if s.len() <= budget {
        return s;
    }
    let mut end = budget;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Evidence block handed to a remote reasoner.
pub fn render_evidence(plan: &RoutingPlan, evidence: &[EvidenceRecord], trace_budget: usize) -> String {
    let mut out = format!("## EVIDENCE  (category: {})\n", plan.category);
    for rec in evidence {
        let w = plan
            .assignments
            .iter()
            .find(|a| a.agent == rec.agent)
            .map_or(0.0, |a| a.weight);
        let answer = rec
            .answer
            .as_ref()
            .map_or_else(|| "<none>".to_string(), |a| a.to_string());
        out.push_str(&format!(
            "\n[agent {} | role {} | w={:.4}]\nAnswer: {}\nTrace:\n{}\n",
            rec.agent,
            rec.role,
            w,
            answer,
            truncate(&rec.trace, trace_budget)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub answer: Option<Answer>,
    pub flag: Option<String>,
}

pub fn aggregate(
    query: &QueryItem,
    plan: &RoutingPlan,
    evidence: &[EvidenceRecord],
    reasoner: &Reasoner,
) -> Result<Aggregated> {
    if evidence.is_empty() {
        return Err(Error::ContractViolation("no evidence to aggregate".into()));
    }
    match reasoner {
        Reasoner::WeightedVote => Ok(Aggregated {
            answer: weighted_vote(plan, evidence),
            flag: None,
        }),
        Reasoner::Remote {
            client,
            trace_budget,
        } => {
            let system = render_reasoning_prompt(query);
            let user = format!(
                "Question : {}\n\n{}",
                query.display_text(),
                render_evidence(plan, evidence, *trace_budget)
            );
            let image = query
                .image_ref
                .as_deref()
                .map(crate::agents::remote::image_url)
                .transpose();
            let reply = image.and_then(|img| {
                client.complete(&system, &user, img.as_deref(), client.endpoint().max_tokens)
            });
            let parsed = reply.and_then(|r| parse_answer(&r, query.answer_kind, query.options.as_deref()));
            match parsed {
                Ok(a) => Ok(Aggregated {
                    answer: Some(a),
                    flag: None,
                }),
                Err(e) => Ok(Aggregated {
                    answer: weighted_vote(plan, evidence),
                    flag: Some(format!("reasoner fell back to weighted vote: {e}")),
                }),
            }
        }
    }
}
