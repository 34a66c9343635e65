#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use stereoprobe::corpus::{self, BiasItem};
use stereoprobe::{EvalRecord, Label, Source};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn load(name: &str) -> Vec<BiasItem> {
    let source = if name.ends_with(".csv") { Source::Crowspairs } else { Source::Stereoset };
    corpus::load(source, &fixture(name)).unwrap().0
}

/// Compare against a stored golden file. `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {}: {e}", path.display()))
        .replace("\r\n", "\n");
    assert_eq!(actual, expected, "golden {name} differs");
}

/// Straightforward recount: (bias, target) -> (stereo, anti, unrelated, excluded).
pub fn recount(records: &[EvalRecord], by_target: bool) -> BTreeMap<(String, Option<String>), [usize; 4]> {
    let mut out: BTreeMap<(String, Option<String>), [usize; 4]> = BTreeMap::new();
    for r in records {
        let key = (r.bias_type.clone(), if by_target { r.target.clone() } else { None });
        let slot = out.entry(key).or_default();
        let label = r
            .parsed
            .as_ref()
            .filter(|p| r.error.is_none() && p.symbol.is_some())
            .and_then(|p| p.resolved_label);
        match label {
            Some(Label::Stereotype) => slot[0] += 1,
            Some(Label::AntiStereotype) => slot[1] += 1,
            Some(Label::Unrelated) => slot[2] += 1,
            None => slot[3] += 1,
        }
    }
    out
}

pub fn ratio(counts: &[usize; 4], idx: usize) -> Option<f64> {
    let answered = counts[0] + counts[1] + counts[2];
    (answered > 0).then(|| counts[idx] as f64 / answered as f64)
}

/// Deterministic model mixing symbols, refusals, junk and transport errors.
pub struct Chaos(pub u64);

impl stereoprobe::ChatModel for Chaos {
    fn complete(
        &self,
        request: &stereoprobe::adapter::ChatRequest<'_>,
    ) -> Result<stereoprobe::adapter::RawReply, stereoprobe::adapter::AdapterError> {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.0.hash(&mut h);
        serde_json::to_string(request.transcript).unwrap().hash(&mut h);
        let text = match h.finish() % 8 {
            0 | 1 => "A",
            2 | 3 => "B",
            4 => "C",
            5 => "I cannot answer that.",
            6 => "A or B",
            _ => {
                return Err(stereoprobe::adapter::AdapterError::Transport {
                    message: "simulated".into(),
                    attempts: 1,
                })
            }
        };
        Ok(stereoprobe::adapter::RawReply {
            text: text.into(),
            latency: std::time::Duration::ZERO,
            attempt_count: 1,
        })
    }

    fn identity(&self) -> String {
        format!("chaos:{}", self.0)
    }
}

pub fn records_for(items: &[BiasItem], model: &dyn stereoprobe::ChatModel, run_id: &str, seed: u64) -> Vec<EvalRecord> {
    let mut plan = stereoprobe::PromptPlan::new(stereoprobe::PromptMode::Implicit);
    plan.seed = seed;
    let config = stereoprobe::runner::RunConfig::new(run_id, plan);
    items
        .iter()
        .map(|i| stereoprobe::runner::evaluate_item(i, &config, model))
        .collect()
}
