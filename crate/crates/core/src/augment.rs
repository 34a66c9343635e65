//! Paraphrase augmentation. Every sentence of an item (context and options)
//! is rewritten by a paraphrase model; ids gain an `#aug` suffix and labels,
//! bias type and target are carried over unchanged.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterError, ChatModel, ChatRequest, DecodeParams};
use crate::corpus::BiasItem;
use crate::error::{Error, Result};
use crate::promptkit::{Message, Transcript};
use crate::runner::bounded_map;

pub const DEFAULT_INSTRUCTION: &str = "Paraphrase the following sentence, preserving its meaning:";
pub const AUG_SUFFIX: &str = "#aug";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    T5Style,
    InstructStyle,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateKind::T5Style => "t5_style",
            TemplateKind::InstructStyle => "instruct_style",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseTemplate {
    pub kind: TemplateKind,
    pub instruct_text: String,
}

impl ParaphraseTemplate {
    pub fn t5() -> Self {
        Self {
            kind: TemplateKind::T5Style,
            instruct_text: DEFAULT_INSTRUCTION.to_string(),
        }
    }

    pub fn instruct() -> Self {
        Self {
            kind: TemplateKind::InstructStyle,
            instruct_text: DEFAULT_INSTRUCTION.to_string(),
        }
    }

    pub fn render(&self, text: &str) -> String {
        match self.kind {
            TemplateKind::T5Style => format!("paraphrase: {text}"),
            TemplateKind::InstructStyle => format!("{}\n{text}", self.instruct_text),
        }
    }
}

/// Decode parameters for paraphrase calls: the evaluation defaults with room
/// for a full sentence.
pub fn paraphrase_params() -> DecodeParams {
    DecodeParams {
        max_tokens: 128,
        ..DecodeParams::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedItem {
    #[serde(flatten)]
    pub item: BiasItem,
    pub parent_id: String,
    pub template_kind: TemplateKind,
    pub warning_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("paraphrasing {item_id} failed: {source}")]
pub struct ParaphraseError {
    pub item_id: String,
    #[source]
    pub source: AdapterError,
}

fn paraphrase_text(
    text: &str,
    model: &dyn ChatModel,
    template: &ParaphraseTemplate,
    params: &DecodeParams,
) -> std::result::Result<String, AdapterError> {
    let transcript = Transcript {
        messages: vec![Message::user(template.render(text))],
    };
    let reply = model.complete(&ChatRequest {
        transcript: &transcript,
        params,
        choices: None,
    })?;
    Ok(reply.text.trim().to_string())
}

/// Paraphrase the context (if any) and every option of `item`.
///
/// Blank paraphrases fall back to the original text and set an
/// `empty_paraphrase:<field>` flag. A rewrite that no longer contains the
/// item's target term sets `target_dropped:<field>`.
pub fn paraphrase_item(
    item: &BiasItem,
    model: &dyn ChatModel,
    template: &ParaphraseTemplate,
) -> std::result::Result<AugmentedItem, ParaphraseError> {
    let params = paraphrase_params();
    let mut flags = Vec::new();
    let target = item.target.as_deref().map(str::to_lowercase);
    let mut rewrite = |field: String, original: &str| -> std::result::Result<String, ParaphraseError> {
        let out = paraphrase_text(original, model, template, &params).map_err(|source| ParaphraseError {
            item_id: item.id.clone(),
            source,
        })?;
        if out.is_empty() {
            flags.push(format!("empty_paraphrase:{field}"));
            return Ok(original.to_string());
        }
        if let Some(t) = &target {
            if original.to_lowercase().contains(t.as_str()) && !out.to_lowercase().contains(t.as_str()) {
                flags.push(format!("target_dropped:{field}"));
            }
        }
        Ok(out)
    };

    let mut augmented = item.clone();
    augmented.id = format!("{}{AUG_SUFFIX}", item.id);
    if let Some(context) = &item.context {
        augmented.context = Some(rewrite("context".into(), context)?);
    }
    for (i, option) in augmented.options.iter_mut().enumerate() {
        option.text = rewrite(format!("options[{i}]"), &item.options[i].text)?;
    }
    Ok(AugmentedItem {
        item: augmented,
        parent_id: item.id.clone(),
        template_kind: template.kind,
        warning_flags: flags,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Paraphrases replace the originals.
    #[default]
    Replace,
    /// Originals followed by their paraphrases.
    Append,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnError {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutcome {
    pub items: Vec<AugmentedItem>,
    pub skipped: Vec<ParaphraseError>,
}

impl AugmentOutcome {
    pub fn corpus(&self) -> Vec<BiasItem> {
        self.items.iter().map(|a| a.item.clone()).collect()
    }
}

/// Augment a training set. Originals kept by `Append` carry no provenance
/// flags and `parent_id` equal to their own id.
pub fn augment_training_set(
    train: &[BiasItem],
    model: &dyn ChatModel,
    template: &ParaphraseTemplate,
    mode: AugmentMode,
    on_error: OnError,
    parallelism: usize,
) -> Result<AugmentOutcome> {
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut results = Vec::with_capacity(train.len());
    bounded_map(
        train,
        parallelism,
        |_, item| paraphrase_item(item, model, template),
        |_, r| results.push(r),
    );

    let mut outcome = AugmentOutcome::default();
    if mode == AugmentMode::Append {
        outcome.items.extend(train.iter().map(|item| AugmentedItem {
            item: item.clone(),
            parent_id: item.id.clone(),
            template_kind: template.kind,
            warning_flags: Vec::new(),
        }));
    }
    for r in results {
        match r {
            Ok(a) => outcome.items.push(a),
            Err(e) if on_error == OnError::Skip => outcome.skipped.push(e),
            Err(source) => {
                return Err(Error::Augment {
                    completed: outcome.items.len(),
                    total: train.len(),
                    source,
                })
            }
        }
    }
    Ok(outcome)
}

pub fn write_augmented(path: &Path, items: &[AugmentedItem]) -> Result<()> {
    crate::jsonl::write_jsonl(path, items)
}
