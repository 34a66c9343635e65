//! Chat-format fine-tuning files: one `{"messages": [...]}` object per line,
//! the MCSB transcript followed by the supervised assistant symbol.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{BiasItem, Label};
use crate::error::{Error, Result};
use crate::promptkit::{
    bind_symbols, build_transcript, BindingPolicy, Message, PromptMode, PromptPlan, Role, Symbol, SysRole,
    Transcript,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneTag {
    Ftna,
    FtaInstruct,
    FtaT5,
    BowHinted,
    Sysrole,
}

impl TuneTag {
    pub const ALL: [TuneTag; 5] = [
        TuneTag::Ftna,
        TuneTag::FtaInstruct,
        TuneTag::FtaT5,
        TuneTag::BowHinted,
        TuneTag::Sysrole,
    ];
}

impl fmt::Display for TuneTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TuneTag::Ftna => "ftna",
            TuneTag::FtaInstruct => "fta_instruct",
            TuneTag::FtaT5 => "fta_t5",
            TuneTag::BowHinted => "bow_hinted",
            TuneTag::Sysrole => "sysrole",
        })
    }
}

impl std::str::FromStr for TuneTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        TuneTag::ALL
            .into_iter()
            .find(|t| t.to_string() == norm)
            .ok_or_else(|| Error::Invalid(format!("unknown fine-tune variant {s:?}")))
    }
}

/// `fta_*` variants expect an already-paraphrased training corpus; the file
/// layout is the same as `ftna`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneVariant {
    pub tag: TuneTag,
    pub hint_words: Option<Vec<String>>,
    pub mode: PromptMode,
}

impl TuneVariant {
    pub fn new(tag: TuneTag, mode: PromptMode) -> Self {
        Self {
            tag,
            hint_words: None,
            mode,
        }
    }

    pub fn bow_hinted(words: Vec<String>, mode: PromptMode) -> Self {
        Self {
            tag: TuneTag::BowHinted,
            hint_words: Some(words),
            mode,
        }
    }

    fn plan(&self, defaults: &TuneDefaults) -> Result<PromptPlan> {
        let mut plan = PromptPlan {
            mode: self.mode,
            sysrole: SysRole::Base,
            hint_words: None,
            binding_policy: defaults.binding_policy,
            seed: defaults.seed,
        };
        match (self.tag, &self.hint_words) {
            (TuneTag::BowHinted, Some(words)) => plan = plan.with_hints(words.clone())?,
            (TuneTag::BowHinted, None) => {
                return Err(Error::Invalid("bow_hinted variant needs hint words".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Invalid(format!(
                    "hint words are only valid for bow_hinted, not {}",
                    self.tag
                )))
            }
            (TuneTag::Sysrole, None) => plan.sysrole = SysRole::FairnessAugmented,
            _ => {}
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneDefaults {
    pub binding_policy: BindingPolicy,
    pub seed: u64,
    /// Supervised answer for implicit-mode training.
    pub implicit_target: Label,
    /// Supervised answer for explicit-mode training.
    pub explicit_target: Label,
}

impl Default for TuneDefaults {
    fn default() -> Self {
        Self {
            binding_policy: BindingPolicy::SeededShuffle,
            seed: 0,
            implicit_target: Label::AntiStereotype,
            explicit_target: Label::Stereotype,
        }
    }
}

/// Build the training transcripts (transcript + supervised assistant symbol).
pub fn finetune_examples(train: &[BiasItem], variant: &TuneVariant, defaults: &TuneDefaults) -> Result<Vec<Transcript>> {
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let plan = variant.plan(defaults)?;
    let target = match variant.mode {
        PromptMode::Implicit => defaults.implicit_target,
        PromptMode::Explicit => defaults.explicit_target,
    };
    train
        .iter()
        .map(|item| {
            let binding = bind_symbols(item, plan.binding_policy, plan.seed);
            let symbol = binding.symbol_for_label(item, target).ok_or_else(|| {
                Error::Invalid(format!("item {} has no {} option", item.id, target.as_str()))
            })?;
            let mut t = build_transcript(item, &binding, &plan);
            t.messages.push(Message::assistant(symbol.as_str()));
            Ok(t)
        })
        .collect()
}

pub fn emit_finetune_file(path: &Path, train: &[BiasItem], variant: &TuneVariant, defaults: &TuneDefaults) -> Result<usize> {
    let examples = finetune_examples(train, variant, defaults)?;
    crate::jsonl::write_jsonl(path, &examples)?;
    Ok(examples.len())
}

/// Expected per-bias line counts. `line_bias[i]` is the bias type of line
/// `i + 1`, normally taken from the training corpus the file was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountCheck {
    pub per_bias: usize,
    pub line_bias: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineFailure {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub passed: bool,
    pub lines: usize,
    pub failures: Vec<LineFailure>,
    pub count_mismatches: Vec<String>,
}

fn check_line(line: &str) -> std::result::Result<(), String> {
    if line.contains('\r') {
        return Err("CR line ending".into());
    }
    let t: Transcript = serde_json::from_str(line).map_err(|e| format!("not a messages object: {e}"))?;
    let msgs = &t.messages;
    if msgs.first().map(|m| m.role) != Some(Role::System) {
        return Err("first message is not the system message".into());
    }
    for (i, m) in msgs.iter().enumerate().skip(1) {
        let expected = if i % 2 == 1 { Role::User } else { Role::Assistant };
        if m.role != expected {
            return Err(format!("message {i} has role {:?}, expected {expected:?}", m.role));
        }
    }
    let last = msgs.last().expect("non-empty");
    if msgs.len() < 3 || last.role != Role::Assistant {
        return Err("final message is not an assistant answer".into());
    }
    if !Symbol::ALL.iter().any(|s| s.as_str() == last.content) {
        return Err(format!("final answer {:?} is not a bare symbol", last.content));
    }
    Ok(())
}

/// Validate a fine-tuning file. Never fails; problems land in the report.
pub fn validate_finetune_file(path: &Path, counts: Option<&CountCheck>) -> FinetuneReport {
    let mut report = FinetuneReport::default();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.failures.push(LineFailure {
                line: 0,
                reason: format!("cannot read {}: {e}", path.display()),
            });
            return report;
        }
    };
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    report.lines = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if let Err(reason) = check_line(line) {
            report.failures.push(LineFailure { line: i + 1, reason });
        }
    }
    if let Some(check) = counts {
        if check.line_bias.len() != lines.len() {
            report.count_mismatches.push(format!(
                "file has {} lines, training corpus has {} items",
                lines.len(),
                check.line_bias.len()
            ));
        }
        let mut per_bias = BTreeMap::<&str, usize>::new();
        for bias in &check.line_bias {
            per_bias.entry(bias).or_default();
        }
        for bias in check.line_bias.iter().take(lines.len()) {
            *per_bias.entry(bias).or_default() += 1;
        }
        for (bias, n) in per_bias {
            if n != check.per_bias {
                report
                    .count_mismatches
                    .push(format!("{bias}: {n} lines, expected {}", check.per_bias));
            }
        }
    }
    report.passed = report.failures.is_empty() && report.count_mismatches.is_empty();
    report
}
