use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::CategoryId;
use crate::similarity::{option_labels, Answer, AnswerKind};

/// One element of a query stream.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryItem {
    pub query_id: String,
    pub text: String,
    /// Path, `http(s)` URL, or `data:` URI.
    pub image_ref: Option<String>,
    pub category_hint: Option<CategoryId>,
    pub answer_kind: AnswerKind,
    /// Option texts; labelled `A`, `B`, ... in order.
    pub options: Option<Vec<String>>,
    pub ground_truth: Option<Answer>,
}

impl QueryItem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ContractViolation(m));
        if self.query_id.is_empty() {
            return bad("query_id is empty".into());
        }
        if self.answer_kind == AnswerKind::Choice {
            match &self.options {
                Some(o) if o.len() >= 2 && o.len() <= 26 => {}
                Some(o) => return bad(format!("choice item needs 2..=26 options, got {}", o.len())),
                None => return bad("choice item without options".into()),
            }
        }
        if let Some(truth) = &self.ground_truth {
            if truth.kind() != self.answer_kind {
                return bad(format!(
                    "truth is {} but the item is {}",
                    truth.kind(),
                    self.answer_kind
                ));
            }
            match truth {
                Answer::Choice(l) => {
                    let labels = option_labels(self.options.as_ref().map_or(0, Vec::len));
                    if !labels.contains(l) {
                        return bad(format!("truth ({l}) is not one of the option labels"));
                    }
                }
                Answer::Numeric(v) if !v.is_finite() => return bad("numeric truth is not finite".into()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn option_labels(&self) -> Vec<String> {
        option_labels(self.options.as_ref().map_or(0, Vec::len))
    }

    /// Question text with the labelled options appended, as shown to agents.
    pub fn display_text(&self) -> String {
        match &self.options {
            Some(opts) if !opts.is_empty() => {
                let mut s = self.text.clone();
                s.push_str("\n  Options  :");
                for (label, text) in self.option_labels().iter().zip(opts) {
                    s.push_str(&format!(" ({label}) {text}"));
                }
                s
            }
            _ => self.text.clone(),
        }
    }
}

/// Line format of a query stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<serde_json::Value>,
}

impl QueryRecord {
    pub fn into_item(self) -> Result<QueryItem> {
        let truth = match self.truth {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(truth_from_json(self.kind, &v)?),
        };
        let item = QueryItem {
            query_id: self.query_id,
            text: self.text,
            image_ref: self.image,
            category_hint: self.category.map(CategoryId::from),
            answer_kind: self.kind,
            options: self.options,
            ground_truth: truth,
        };
        item.validate()?;
        Ok(item)
    }
}

impl From<&QueryItem> for QueryRecord {
    fn from(q: &QueryItem) -> Self {
        QueryRecord {
            query_id: q.query_id.clone(),
            text: q.text.clone(),
            image: q.image_ref.clone(),
            category: q.category_hint.as_ref().map(|c| c.to_string()),
            kind: q.answer_kind,
            options: q.options.clone(),
            truth: q.ground_truth.as_ref().map(|t| match t {
                Answer::Choice(l) => serde_json::Value::String(l.clone()),
                Answer::Numeric(v) => serde_json::json!(v),
                Answer::Text(s) => serde_json::Value::String(s.clone()),
            }),
        }
    }
}

fn truth_from_json(kind: AnswerKind, v: &serde_json::Value) -> Result<Answer> {
    let bad = || Error::ContractViolation(format!("truth {v} does not fit a {kind} item"));
    match kind {
        AnswerKind::Choice => v
            .as_str()
            .map(|s| Answer::choice(s.trim_matches(|c| c == '(' || c == ')')))
            .ok_or_else(bad),
        AnswerKind::Numeric => match v {
            serde_json::Value::Number(n) => n.as_f64().map(Answer::Numeric).ok_or_else(bad),
            serde_json::Value::String(s) => s.trim().parse().map(Answer::Numeric).map_err(|_| bad()),
            _ => Err(bad()),
        },
        AnswerKind::Text => v.as_str().map(|s| Answer::Text(s.to_string())).ok_or_else(bad),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(json: &str) -> Result<QueryItem> {
        serde_json::from_str::<QueryRecord>(json).unwrap().into_item()
    }

    #[test]
    fn parses_choice_item() {
        let q = rec(r#"{"query_id":"q1","text":"Which is closer?","image":"img.png","kind":"choice","options":["mug","lamp"],"truth":"(b)"}"#).unwrap();
        assert_eq!(q.ground_truth, Some(Answer::choice("B")));
        assert_eq!(q.display_text(), "Which is closer?\n  Options  : (A) mug (B) lamp");
    }

    #[test]
    fn choice_without_options_is_invalid() {
        assert!(rec(r#"{"query_id":"q1","text":"?","kind":"choice","truth":"A"}"#).is_err());
    }

    #[test]
    fn truth_label_out_of_range_is_invalid() {
        assert!(rec(r#"{"query_id":"q1","text":"?","kind":"choice","options":["x","y"],"truth":"C"}"#).is_err());
    }

    #[test]
    fn numeric_truth_accepts_strings() {
        let q = rec(r#"{"query_id":"n","text":"how far","kind":"numeric","truth":"2.5"}"#).unwrap();
        assert_eq!(q.ground_truth, Some(Answer::Numeric(2.5)));
        assert!(rec(r#"{"query_id":"n","text":"?","kind":"numeric","truth":"far"}"#).is_err());
    }

    #[test]
    fn record_round_trips() {
        let q = rec(r#"{"query_id":"t","text":"what","category":"size","kind":"text","truth":"red car"}"#).unwrap();
        let back = QueryRecord::from(&q).into_item().unwrap();
        assert_eq!(q, back);
    }
}
