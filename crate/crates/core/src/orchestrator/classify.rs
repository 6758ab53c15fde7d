use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::prompts::render_head_prompt;
use crate::agents::remote::HEAD_MAX_TOKENS;
use crate::agents::ChatClient;
use crate::error::{Error, Result};
use crate::ids::CategoryId;
use crate::query::QueryItem;

pub const SPATIAL_RELATION: &str = "spatial_relation";
pub const COUNTING: &str = "counting";
pub const SIZE: &str = "size";
pub const DISTANCE_DEPTH: &str = "distance_depth";
pub const ORIENTATION: &str = "orientation";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryTaxonomy {
    pub categories: Vec<CategoryId>,
    /// Where queries go when the classifier output is unusable.
    pub default_category: CategoryId,
}

impl Default for CategoryTaxonomy {
    fn default() -> Self {
        Self {
            categories: [SPATIAL_RELATION, COUNTING, SIZE, DISTANCE_DEPTH, ORIENTATION]
                .into_iter()
                .map(CategoryId::from)
                .collect(),
            default_category: SPATIAL_RELATION.into(),
        }
    }
}

impl CategoryTaxonomy {
    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("taxonomy has no categories".into()));
        }
        if !self.contains(&self.default_category) {
            return Err(Error::Config(format!(
                "default category {} is not in the taxonomy",
                self.default_category
            )));
        }
        Ok(())
    }

    pub fn contains(&self, c: &CategoryId) -> bool {
        self.categories.contains(c)
    }

    /// Case- and punctuation-insensitive lookup of a model's reply.
    pub fn lookup(&self, raw: &str) -> Option<CategoryId> {
        let cleaned: String = raw
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
            .to_ascii_lowercase()
            .replace([' ', '-'], "_");
        self.categories
            .iter()
            .find(|c| c.as_str() == cleaned)
            .cloned()
    }
}

/// Ordered keyword rules; the first rule whose category is in the taxonomy
/// and whose pattern matches wins.
static RULES: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    let rule = |c, p: &str| (c, Regex::new(&format!(r"(?i)\b(?:{p})\b")).expect("valid regex"));
    vec![
        rule(COUNTING, r"how many|count|counting|number of"),
        rule(
            DISTANCE_DEPTH,
            r"closer|closest|nearer|nearest|farther|farthest|further|furthest|distance|far|depth|deeper|proximity|from the (?:camera|viewer)|to the (?:camera|viewer)",
        ),
        rule(
            SIZE,
            r"taller|tallest|shorter|shortest|bigger|biggest|larger|largest|smaller|smallest|wider|widest|longer|longest|size|tall|big|small|large|wide",
        ),
        rule(
            SPATIAL_RELATION,
            r"above|below|higher|highest|lower|lowest|on top of|atop|under|underneath|beneath|between|next to|beside|elevation|stacked",
        ),
        rule(
            ORIENTATION,
            r"facing|faces|face|direction|left|right|front|behind|parallel|perpendicular|orientation|oriented|pointing|angle",
        ),
    ]
});

pub fn keyword_category(text: &str, taxonomy: &CategoryTaxonomy) -> Option<CategoryId> {
    RULES
        .iter()
        .filter(|(c, _)| taxonomy.contains(&CategoryId::from(*c)))
        .find(|(_, re)| re.is_match(text))
        .map(|(c, _)| CategoryId::from(*c))
}

#[derive(Debug, Default)]
pub enum Classifier {
    #[default]
    Keyword,
    Remote(ChatClient),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub category: CategoryId,
    /// Set when the query fell back to the default category.
    pub flag: Option<String>,
}

/// Category of `query`: its hint if present, otherwise the classifier's
/// answer. Unusable answers route to the default category with a flag.
pub fn classify(
    query: &QueryItem,
    taxonomy: &CategoryTaxonomy,
    classifier: &Classifier,
) -> Classification {
    let fallback = |flag: String| Classification {
        category: taxonomy.default_category.clone(),
        flag: Some(flag),
    };
    if let Some(hint) = &query.category_hint {
        return if taxonomy.contains(hint) {
            Classification {
                category: hint.clone(),
                flag: None,
            }
        } else {
            fallback(format!("category hint {hint} is not in the taxonomy"))
        };
    }
    let result = match classifier {
        Classifier::Keyword => keyword_category(&query.text, taxonomy).ok_or_else(|| {
            Error::Classification {
                output: String::new(),
            }
        }),
        Classifier::Remote(client) => client
            .complete(&render_head_prompt(query), &query.text, None, HEAD_MAX_TOKENS)
            .and_then(|reply| {
                taxonomy
                    .lookup(&reply)
                    .ok_or(Error::Classification { output: reply })
            }),
    };
    match result {
        Ok(category) => Classification {
            category,
            flag: None,
        },
        Err(e) => fallback(e.to_string()),
    }
}
