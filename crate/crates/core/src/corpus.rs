//! Benchmark ingestion: StereoSet dev JSON and CrowS-Pairs CSV normalized into
//! [`BiasItem`]s, plus distribution statistics and seeded train/test splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Stereoset,
    Crowspairs,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Stereoset => "stereoset",
            Source::Crowspairs => "crowspairs",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stereoset" => Ok(Source::Stereoset),
            "crowspairs" | "crows-pairs" | "crows_pairs" => Ok(Source::Crowspairs),
            other => Err(Error::Invalid(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Stereotype,
    AntiStereotype,
    Unrelated,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stereotype => "stereotype",
            Label::AntiStereotype => "anti_stereotype",
            Label::Unrelated => "unrelated",
        }
    }

    /// Parse a StereoSet `gold_label` value.
    fn from_gold(s: &str) -> Option<Self> {
        match s {
            "stereotype" => Some(Label::Stereotype),
            "anti-stereotype" | "anti_stereotype" => Some(Label::AntiStereotype),
            "unrelated" => Some(Label::Unrelated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub text: String,
    pub label: Label,
}

/// One normalized benchmark datapoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasItem {
    pub id: String,
    pub source: Source,
    pub bias_type: String,
    pub target: Option<String>,
    pub context: Option<String>,
    pub options: Vec<AnswerOption>,
}

impl BiasItem {
    pub fn option_with(&self, label: Label) -> Option<(usize, &AnswerOption)> {
        self.options.iter().enumerate().find(|(_, o)| o.label == label)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.options.iter().map(|o| o.label).collect()
    }

    /// Check the per-source shape invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(format!("item {}: {msg}", self.id)));
        if self.options.iter().any(|o| o.text.trim().is_empty()) {
            return bad("empty option text");
        }
        let mut labels = self.labels();
        labels.sort();
        match self.source {
            Source::Stereoset => {
                if labels != [Label::Stereotype, Label::AntiStereotype, Label::Unrelated] {
                    return bad("StereoSet items need one option of each label");
                }
                if self.context.as_deref().is_none_or(|c| c.trim().is_empty()) {
                    return bad("StereoSet items need a context");
                }
                if self.target.is_none() {
                    return bad("StereoSet items need a target");
                }
            }
            Source::Crowspairs => {
                if labels != [Label::Stereotype, Label::AntiStereotype] {
                    return bad("CrowS-Pairs items need a stereotype and an anti-stereotype option");
                }
                if self.context.is_some() {
                    return bad("CrowS-Pairs items carry no context");
                }
            }
        }
        Ok(())
    }
}

/// Lowercase, whitespace runs collapsed to single hyphens.
pub fn normalize_bias_type(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub kept: usize,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Load the intersentence portion of a StereoSet dev file.
///
/// Intrasentence entries are dropped and counted. Malformed entries (missing
/// keys, repeated gold labels, empty sentences, duplicate ids) are skipped with
/// a warning. Only a missing or mistyped top-level structure is fatal.
pub fn load_stereoset(path: &Path) -> Result<(Vec<BiasItem>, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let root: Value =
        serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    let ctx = path.display().to_string();
    let data = root
        .get("data")
        .ok_or_else(|| Error::schema(&ctx, "missing top-level \"data\""))?;
    let inter = data
        .get("intersentence")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(&ctx, "missing \"data.intersentence\" array"))?;
    let intra = match data.get("intrasentence") {
        None | Some(Value::Null) => 0,
        Some(Value::Array(a)) => a.len(),
        Some(_) => return Err(Error::schema(&ctx, "\"data.intrasentence\" is not an array")),
    };

    let mut report = LoadReport {
        dropped: intra,
        ..LoadReport::default()
    };
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(inter.len());
    for (n, entry) in inter.iter().enumerate() {
        match stereoset_entry(entry) {
            Ok(item) if !seen.insert(item.id.clone()) => {
                report.dropped += 1;
                report
                    .warnings
                    .push(format!("intersentence[{n}]: duplicate id {}, skipped", item.id));
            }
            Ok(item) => items.push(item),
            Err(msg) => {
                report.dropped += 1;
                report.warnings.push(format!("intersentence[{n}]: {msg}, skipped"));
            }
        }
    }
    report.kept = items.len();
    report.warnings.extend(target_warnings(&items));
    Ok((items, report))
}

fn stereoset_entry(entry: &Value) -> std::result::Result<BiasItem, String> {
    let field = |key: &str| -> std::result::Result<&str, String> {
        entry
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| format!("missing key {key:?}"))
    };
    let id = field("id")?;
    let target = field("target")?;
    let bias_type = field("bias_type")?;
    let context = field("context")?;
    let sentences = entry
        .get("sentences")
        .and_then(Value::as_array)
        .ok_or("missing key \"sentences\"")?;

    let mut options = Vec::with_capacity(sentences.len());
    for s in sentences {
        let text = s
            .get("sentence")
            .and_then(Value::as_str)
            .ok_or("sentence without \"sentence\"")?;
        let gold = s
            .get("gold_label")
            .and_then(Value::as_str)
            .ok_or("sentence without \"gold_label\"")?;
        let label = Label::from_gold(gold).ok_or_else(|| format!("unknown gold_label {gold:?}"))?;
        if options.iter().any(|o: &AnswerOption| o.label == label) {
            return Err(format!("duplicate gold_label {gold:?}"));
        }
        options.push(AnswerOption {
            text: text.to_string(),
            label,
        });
    }
    let item = BiasItem {
        id: format!("stereoset:{id}"),
        source: Source::Stereoset,
        bias_type: normalize_bias_type(bias_type),
        target: Some(target.to_string()),
        context: Some(context.to_string()),
        options,
    };
    item.validate().map_err(|e| e.to_string())?;
    Ok(item)
}

/// StereoSet religion targets that name a language, place or practice rather
/// than a religion. Kept verbatim; reported only.
const IRREGULAR_TARGETS: &[(&str, &str)] = &[
    ("religion", "sanskrit"),
    ("religion", "mecca"),
    ("religion", "jesus"),
    ("religion", "baptize"),
];

/// Warnings for targets known to be irregular for their bias type.
pub fn target_warnings(items: &[BiasItem]) -> Vec<String> {
    let mut flagged = BTreeMap::<(String, String), usize>::new();
    for item in items {
        let Some(target) = &item.target else { continue };
        let key = (item.bias_type.as_str(), target.to_lowercase());
        if IRREGULAR_TARGETS.iter().any(|(b, t)| *b == key.0 && *t == key.1) {
            *flagged
                .entry((item.bias_type.clone(), target.clone()))
                .or_default() += 1;
        }
    }
    flagged
        .into_iter()
        .map(|((bias, target), n)| {
            format!("irregular target {target:?} under {bias:?} ({n} items), kept verbatim")
        })
        .collect()
}

/// Load the CrowS-Pairs CSV. Rows whose polarity is not `stereo`/`antistereo`
/// or whose sentences are empty are skipped with a warning.
pub fn load_crowspairs(path: &Path) -> Result<(Vec<BiasItem>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::schema(path.display().to_string(), format!("missing column {name:?}")))
    };
    let more = col("sent_more")?;
    let less = col("sent_less")?;
    let polarity = col("stereo_antistereo")?;
    let bias = col("bias_type")?;
    // the published file's first column is an unnamed row index
    let index = headers.iter().position(|h| h.trim().is_empty());

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row_no = n + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.dropped += 1;
                report.warnings.push(format!("row {row_no}: {e}, skipped"));
                continue;
            }
        };
        let get = |i: usize| row.get(i).unwrap_or("");
        let (sent_more, sent_less) = (get(more), get(less));
        let (more_label, less_label) = match get(polarity).trim() {
            "stereo" => (Label::Stereotype, Label::AntiStereotype),
            "antistereo" => (Label::AntiStereotype, Label::Stereotype),
            other => {
                report.dropped += 1;
                report
                    .warnings
                    .push(format!("row {row_no}: unknown stereo_antistereo {other:?}, skipped"));
                continue;
            }
        };
        let local_id = index
            .map(|i| get(i).trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| n.to_string());
        let item = BiasItem {
            id: format!("crowspairs:{local_id}"),
            source: Source::Crowspairs,
            bias_type: normalize_bias_type(get(bias)),
            target: None,
            context: None,
            options: vec![
                AnswerOption {
                    text: sent_more.to_string(),
                    label: more_label,
                },
                AnswerOption {
                    text: sent_less.to_string(),
                    label: less_label,
                },
            ],
        };
        if item.bias_type.is_empty() {
            report.dropped += 1;
            report.warnings.push(format!("row {row_no}: empty bias_type, skipped"));
            continue;
        }
        if let Err(e) = item.validate() {
            report.dropped += 1;
            report.warnings.push(format!("row {row_no}: {e}, skipped"));
            continue;
        }
        if !seen.insert(item.id.clone()) {
            report.dropped += 1;
            report
                .warnings
                .push(format!("row {row_no}: duplicate id {}, skipped", item.id));
            continue;
        }
        items.push(item);
    }
    report.kept = items.len();
    Ok((items, report))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::read(path, io),
        other => Error::schema(path.display().to_string(), format!("{other:?}")),
    }
}

/// Load either source format, dispatching on `source`.
pub fn load(source: Source, path: &Path) -> Result<(Vec<BiasItem>, LoadReport)> {
    match source {
        Source::Stereoset => load_stereoset(path),
        Source::Crowspairs => load_crowspairs(path),
    }
}

/// Read a normalized corpus written by [`write_corpus`].
pub fn read_corpus(path: &Path) -> Result<Vec<BiasItem>> {
    let items: Vec<BiasItem> = crate::jsonl::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for item in &items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate item id {}", item.id)));
        }
    }
    Ok(items)
}

pub fn write_corpus(path: &Path, items: &[BiasItem]) -> Result<()> {
    crate::jsonl::write_jsonl(path, items)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub source: Option<Source>,
    pub total: usize,
    pub per_bias: BTreeMap<String, usize>,
    /// bias type → target → count. Items without a target are not listed here.
    pub per_target: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn corpus_stats(items: &[BiasItem]) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    for item in items {
        match stats.source {
            None => stats.source = Some(item.source),
            Some(s) if s != item.source => {
                return Err(Error::Invalid(format!(
                    "corpus mixes sources {s} and {}",
                    item.source
                )))
            }
            Some(_) => {}
        }
        stats.total += 1;
        *stats.per_bias.entry(item.bias_type.clone()).or_default() += 1;
        if let Some(target) = &item.target {
            *stats
                .per_target
                .entry(item.bias_type.clone())
                .or_default()
                .entry(target.clone())
                .or_default() += 1;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_bias_train_count: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 20 items per bias type, the StereoSet training budget.
    pub const STEREOSET_DEFAULT: usize = 20;
    /// 8 items per bias type, the CrowS-Pairs training budget.
    pub const CROWSPAIRS_DEFAULT: usize = 8;

    pub fn new(per_bias_train_count: usize, seed: u64) -> Result<Self> {
        if per_bias_train_count == 0 {
            return Err(Error::Invalid("per_bias_train_count must be at least 1".into()));
        }
        Ok(Self {
            per_bias_train_count,
            seed,
        })
    }

    pub fn default_for(source: Source, seed: u64) -> Self {
        let per_bias_train_count = match source {
            Source::Stereoset => Self::STEREOSET_DEFAULT,
            Source::Crowspairs => Self::CROWSPAIRS_DEFAULT,
        };
        Self {
            per_bias_train_count,
            seed,
        }
    }
}

/// Partition `items` into train and test. For each bias type the ids are
/// sorted, shuffled by an RNG keyed on `(seed, bias_type)`, and the first
/// `per_bias_train_count` go to train. Both halves keep input order.
pub fn split_train_test(
    items: &[BiasItem],
    spec: SplitSpec,
) -> Result<(Vec<BiasItem>, Vec<BiasItem>)> {
    if spec.per_bias_train_count == 0 {
        return Err(Error::Invalid("per_bias_train_count must be at least 1".into()));
    }
    let mut by_bias = BTreeMap::<&str, Vec<&str>>::new();
    for item in items {
        by_bias.entry(&item.bias_type).or_default().push(&item.id);
    }
    let mut train_ids = HashSet::new();
    for (bias, mut ids) in by_bias {
        if ids.len() < spec.per_bias_train_count {
            return Err(Error::Invalid(format!(
                "bias type {bias:?} has {} items, fewer than the {} requested for training",
                ids.len(),
                spec.per_bias_train_count
            )));
        }
        ids.sort_unstable();
        let mut rng = keyed_rng(spec.seed, bias);
        ids.shuffle(&mut rng);
        train_ids.extend(ids.into_iter().take(spec.per_bias_train_count));
    }
    Ok(items
        .iter()
        .cloned()
        .partition(|item| train_ids.contains(item.id.as_str())))
}
