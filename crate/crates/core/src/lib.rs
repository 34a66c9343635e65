//! Stereotype benchmark harness.
//!
//! Benchmarks (StereoSet, CrowS-Pairs) are normalized into [`corpus::BiasItem`]s,
//! rendered as multiple-choice symbol-binding transcripts ([`promptkit`]),
//! sent to a [`adapter::ChatModel`] by the [`runner`], and analysed offline
//! from the run directory by [`metrics`], [`bow`] and [`report`]. [`augment`]
//! and [`tuneprep`] produce paraphrased corpora and fine-tuning files.

pub mod adapter;
pub mod augment;
pub mod bow;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod promptkit;
pub mod report;
pub mod runner;
pub mod tuneprep;

#[cfg(test)]
mod testutil;

pub use adapter::{ChatModel, DecodeParams, MockModel, MockPolicy};
pub use corpus::{AnswerOption, BiasItem, Label, Source};
pub use error::{Error, Result};
pub use promptkit::{PromptMode, PromptPlan, Symbol, SymbolBinding, Transcript};
pub use runner::{EvalRecord, RunManifest};


pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// ChaCha RNG keyed on `(seed, key)` through SHA-256, stable across platforms.
pub(crate) fn keyed_rng(seed: u64, key: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&hasher.finalize());
    rand_chacha::ChaCha8Rng::from_seed(bytes)
}
