//! Bag-of-words attribution over evaluation records.
//!
//! For `ImpelledStereotype`, a token scores +1 for every answered record that
//! chose the stereotype option and whose chosen text contains the token, and
//! -1 for every answered record that avoided the stereotype although the
//! stereotype option contained it. `ImpelledAnti` is the mirror image.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{BiasItem, Label};
use crate::error::{Error, Result};
use crate::runner::EvalRecord;

pub const STOPWORDS_VERSION: &str = "en-v1";
const STOPWORDS: &str = include_str!("../data/stopwords-en-v1.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercased content tokens. Asterisks stay inside tokens ("ret*rd");
/// apostrophes only between alphanumerics.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().map(|c| if c == '\u{2019}' { '\'' } else { c }).collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if cur.chars().any(char::is_alphanumeric) && !stopwords().contains(cur.as_str()) {
            tokens.push(std::mem::take(cur));
        } else {
            cur.clear();
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || c == '*'
            || (c == '\''
                && cur.chars().last().is_some_and(char::is_alphanumeric)
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        if keep {
            cur.extend(c.to_lowercase());
        } else {
            flush(&mut cur, &mut tokens);
        }
    }
    flush(&mut cur, &mut tokens);
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ImpelledStereotype,
    ImpelledAnti,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::ImpelledStereotype, Direction::ImpelledAnti];

    pub fn label(self) -> Label {
        match self {
            Direction::ImpelledStereotype => Label::Stereotype,
            Direction::ImpelledAnti => Label::AntiStereotype,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "impelled_stereotype" | "stereotype" => Ok(Direction::ImpelledStereotype),
            "impelled_anti" | "anti" => Ok(Direction::ImpelledAnti),
            _ => Err(Error::Invalid(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bias_type")]
pub enum Scope {
    All,
    Bias(String),
}

impl Scope {
    fn admits(&self, bias: &str) -> bool {
        match self {
            Scope::All => true,
            Scope::Bias(b) => b == bias,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("all"),
            Scope::Bias(b) => f.write_str(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedToken {
    pub token: String,
    pub score: i64,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAttribution {
    pub scope: Scope,
    pub direction: Direction,
    pub ranked: Vec<RankedToken>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowConfig {
    pub k: usize,
    pub include_context: bool,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            k: 10,
            include_context: false,
        }
    }
}

fn token_set(item: &BiasItem, option: usize, include_context: bool) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = tokenize(&item.options[option].text).into_iter().collect();
    if include_context {
        if let Some(ctx) = &item.context {
            set.extend(tokenize(ctx));
        }
    }
    set
}

/// Rank tokens for one direction and scope. Tokens with a non-positive score
/// are not reported.
pub fn attribute_words(
    records: &[EvalRecord],
    corpus: &[BiasItem],
    direction: Direction,
    scope: &Scope,
    config: &BowConfig,
) -> Result<WordAttribution> {
    let by_id: HashMap<&str, &BiasItem> = corpus.iter().map(|i| (i.id.as_str(), i)).collect();
    let target = direction.label();
    // token -> (positive hits, negative hits)
    let mut tally: BTreeMap<String, (i64, usize)> = BTreeMap::new();
    for rec in records {
        let Some(label) = rec.answer().and_then(|a| a.resolved_label) else {
            continue;
        };
        if !scope.admits(&rec.bias_type) {
            continue;
        }
        let item = by_id
            .get(rec.item_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("record {} has no item in the corpus", rec.item_id)))?;
        let Some((target_idx, _)) = item.option_with(target) else {
            continue;
        };
        if label == target {
            let Some(chosen) = item.option_with(label).map(|(i, _)| i) else {
                continue;
            };
            for tok in token_set(item, chosen, config.include_context) {
                let e = tally.entry(tok).or_default();
                e.0 += 1;
                e.1 += 1;
            }
        } else {
            for tok in token_set(item, target_idx, config.include_context) {
                tally.entry(tok).or_default().0 -= 1;
            }
        }
    }
    let mut ranked: Vec<RankedToken> = tally
        .into_iter()
        .filter(|(_, (score, _))| *score > 0)
        .map(|(token, (score, support_count))| RankedToken {
            token,
            score,
            support_count,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
    ranked.truncate(config.k);
    Ok(WordAttribution {
        scope: scope.clone(),
        direction,
        ranked,
    })
}

/// Both directions for "all" plus every bias type present in `records`.
pub fn attribute_all_scopes(records: &[EvalRecord], corpus: &[BiasItem], config: &BowConfig) -> Result<Vec<WordAttribution>> {
    let biases: BTreeSet<&str> = records.iter().map(|r| r.bias_type.as_str()).collect();
    let scopes: Vec<Scope> = std::iter::once(Scope::All)
        .chain(biases.into_iter().map(|b| Scope::Bias(b.to_string())))
        .collect();
    let mut out = Vec::new();
    for direction in Direction::BOTH {
        for scope in &scopes {
            out.push(attribute_words(records, corpus, direction, scope, config)?);
        }
    }
    Ok(out)
}

fn is_number_pair(a: &str, b: &str) -> bool {
    let one_way = |s: &str, p: &str| {
        p.strip_prefix(s).is_some_and(|rest| rest == "s" || rest == "es")
            || (s.ends_with('y') && p.strip_suffix("ies") == Some(&s[..s.len() - 1]))
    };
    one_way(a, b) || one_way(b, a)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HintSelection {
    pub words: Vec<String>,
    pub warning: Option<String>,
}

/// Top-`n` tokens with singular/plural pairs collapsed onto the higher-ranked
/// form.
pub fn hint_words_from(attr: &WordAttribution, n: usize) -> Result<HintSelection> {
    if n == 0 {
        return Ok(HintSelection::default());
    }
    if attr.ranked.is_empty() {
        return Err(Error::Invalid(format!(
            "no ranked tokens for scope {} to draw hints from",
            attr.scope
        )));
    }
    let mut words: Vec<String> = Vec::new();
    for r in &attr.ranked {
        if words.len() == n {
            break;
        }
        if !words.iter().any(|w| is_number_pair(w, &r.token)) {
            words.push(r.token.clone());
        }
    }
    let warning = (words.len() < n).then(|| format!("requested {n} hint words, only {} available", words.len()));
    Ok(HintSelection { words, warning })
}
