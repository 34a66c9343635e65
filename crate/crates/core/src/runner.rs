//! Evaluation runs: bind, prompt, call the model with bounded parallelism,
//! parse, and append [`EvalRecord`]s to an append-only run directory.
//!
//! Run directory layout:
//!
//! ```text
//! <run_dir>/manifest.json   RunManifest
//! <run_dir>/corpus.jsonl    frozen copy of the evaluated items
//! <run_dir>/records.jsonl   one EvalRecord per line
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterError, ChatModel, ChatRequest, DecodeParams};
use crate::corpus::{read_corpus, write_corpus, BiasItem};
use crate::error::{Error, Result};
use crate::jsonl::{sha256_file, to_line};
use crate::promptkit::{bind_symbols, build_transcript, parse_reply, ParsedAnswer, PromptPlan, SymbolBinding};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub plan: PromptPlan,
    pub params: DecodeParams,
    pub parallelism: usize,
    pub run_id: String,
    pub dataset_ref: String,
    pub model_ref: String,
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>, plan: PromptPlan) -> Self {
        Self {
            plan,
            params: DecodeParams::default(),
            parallelism: 1,
            run_id: run_id.into(),
            dataset_ref: String::new(),
            model_ref: String::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Invalid("parallelism must be at least 1".into()));
        }
        if self.run_id.trim().is_empty() {
            return Err(Error::Invalid("run_id is empty".into()));
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl From<&AdapterError> for ErrorRecord {
    fn from(e: &AdapterError) -> Self {
        Self {
            class: e.class().to_string(),
            message: e.to_string(),
            status: e.status(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Result of one model call. Exactly one of `parsed` / `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: String,
    pub item_id: String,
    pub bias_type: String,
    pub target: Option<String>,
    pub binding: SymbolBinding,
    pub raw_reply: String,
    pub parsed: Option<ParsedAnswer>,
    pub error: Option<ErrorRecord>,
    pub timing: Timing,
}

impl EvalRecord {
    /// The parsed answer when the model picked a bound symbol.
    pub fn answer(&self) -> Option<&ParsedAnswer> {
        self.parsed.as_ref().filter(|p| p.is_answer())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus_hash: String,
    pub adapter: String,
    pub dataset_ref: String,
    pub model_ref: String,
    pub plan: PromptPlan,
    pub params: DecodeParams,
    pub parallelism: usize,
    pub item_count: usize,
    pub created_at: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn config(&self) -> RunConfig {
        RunConfig {
            plan: self.plan.clone(),
            params: self.params,
            parallelism: self.parallelism,
            run_id: self.run_id.clone(),
            dataset_ref: self.dataset_ref.clone(),
            model_ref: self.model_ref.clone(),
        }
    }
}

/// Everything downstream analysis needs, read back from a run directory.
#[derive(Debug, Clone)]
pub struct RunData {
    pub manifest: RunManifest,
    pub corpus: Vec<BiasItem>,
    pub records: Vec<EvalRecord>,
}

/// Evaluate a single item. Adapter failures become error records.
pub fn evaluate_item(item: &BiasItem, config: &RunConfig, model: &dyn ChatModel) -> EvalRecord {
    let binding = bind_symbols(item, config.plan.binding_policy, config.plan.seed);
    let transcript = build_transcript(item, &binding, &config.plan);
    let choices = binding.labelled(item);
    let outcome = model.complete(&ChatRequest {
        transcript: &transcript,
        params: &config.params,
        choices: Some(&choices),
    });
    let (raw_reply, parsed, error, timing) = match outcome {
        Ok(reply) => {
            let parsed = parse_reply(&reply.text, &binding, &item.labels());
            let timing = Timing {
                latency_ms: reply.latency.as_millis() as u64,
                attempts: reply.attempt_count,
            };
            (reply.text, Some(parsed), None, timing)
        }
        Err(e) => {
            let timing = Timing {
                latency_ms: 0,
                attempts: e.attempts(),
            };
            (String::new(), None, Some(ErrorRecord::from(&e)), timing)
        }
    };
    EvalRecord {
        run_id: config.run_id.clone(),
        item_id: item.id.clone(),
        bias_type: item.bias_type.clone(),
        target: item.target.clone(),
        binding,
        raw_reply,
        parsed,
        error,
        timing,
    }
}

/// Apply `work` to every input on at most `parallelism` threads. Results are
/// handed to `sink` on the calling thread strictly in input order.
pub fn bounded_map<T, R, W, S>(inputs: &[T], parallelism: usize, work: W, mut sink: S)
where
    T: Sync,
    R: Send,
    W: Fn(usize, &T) -> R + Sync,
    S: FnMut(usize, R),
{
    let workers = parallelism.max(1).min(inputs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                if tx.send((i, work(i, &inputs[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffered = BTreeMap::new();
        let mut cursor = 0;
        for (i, r) in rx {
            buffered.insert(i, r);
            while let Some(r) = buffered.remove(&cursor) {
                sink(cursor, r);
                cursor += 1;
            }
        }
    });
}

struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
    failed: Option<std::io::Error>,
}

impl RecordWriter {
    fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::write(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            failed: None,
        })
    }

    fn write(&mut self, record: &EvalRecord) {
        if self.failed.is_none() {
            if let Err(e) = self.out.write_all(to_line(record).as_bytes()) {
                self.failed = Some(e);
            }
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(e) = self.failed {
            return Err(Error::write(&self.path, e));
        }
        let file = self
            .out
            .into_inner()
            .map_err(|e| Error::write(&self.path, e.into_error()))?;
        file.sync_all().map_err(|e| Error::write(&self.path, e))
    }
}

fn execute(items: &[BiasItem], config: &RunConfig, model: &dyn ChatModel, records_path: &Path) -> Result<Vec<EvalRecord>> {
    let mut writer = RecordWriter::append(records_path)?;
    let mut out = Vec::with_capacity(items.len());
    bounded_map(
        items,
        config.parallelism,
        |_, item| evaluate_item(item, config, model),
        |_, record| {
            writer.write(&record);
            out.push(record);
        },
    );
    writer.finish()?;
    Ok(out)
}

/// Run a fresh evaluation into `run_dir`, which must not already hold records.
pub fn run_eval(items: &[BiasItem], config: &RunConfig, model: &dyn ChatModel, run_dir: &Path) -> Result<Vec<EvalRecord>> {
    config.validate()?;
    let mut seen = HashSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate item id {}", item.id)));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::write(run_dir, e))?;
    let records_path = run_dir.join(RECORDS_FILE);
    if records_path.exists() {
        return Err(Error::Invalid(format!(
            "{} already exists; resume the run or choose another directory",
            records_path.display()
        )));
    }
    let corpus_path = run_dir.join(CORPUS_FILE);
    write_corpus(&corpus_path, items)?;
    let manifest = RunManifest {
        run_id: config.run_id.clone(),
        corpus_hash: sha256_file(&corpus_path)?,
        adapter: model.identity(),
        dataset_ref: config.dataset_ref.clone(),
        model_ref: config.model_ref.clone(),
        plan: config.plan.clone(),
        params: config.params,
        parallelism: config.parallelism,
        item_count: items.len(),
        created_at: chrono::Utc::now().to_rfc3339(),
        tool_version: crate::TOOL_VERSION.to_string(),
    };
    write_manifest(run_dir, &manifest)?;
    File::create(&records_path).map_err(|e| Error::write(&records_path, e))?;
    execute(items, config, model, &records_path)
}

fn write_manifest(run_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = run_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("serializable");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::write(&path, e))
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::read(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}

/// Parse `records.jsonl`. A corrupt final line is reported as `Some(offset)`,
/// the byte length of the valid prefix; corruption elsewhere is an error.
fn scan_records(path: &Path) -> Result<(Vec<EvalRecord>, Option<usize>)> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), None)),
        Err(e) => return Err(Error::read(path, e)),
    };
    let mut records = Vec::new();
    let mut offset = 0;
    let mut lines = bytes.split_inclusive(|&b| b == b'\n').peekable();
    let mut line_no = 0;
    while let Some(line) = lines.next() {
        line_no += 1;
        let is_last = lines.peek().is_none();
        let complete = line.ends_with(b"\n");
        let parsed = std::str::from_utf8(line)
            .ok()
            .map(str::trim)
            .and_then(|s| if s.is_empty() { None } else { Some(serde_json::from_str::<EvalRecord>(s)) });
        match parsed {
            None if complete => {}
            Some(Ok(r)) if complete => records.push(r),
            _ if is_last => return Ok((records, Some(offset))),
            Some(Err(e)) => {
                return Err(Error::schema(format!("{}:{line_no}", path.display()), e.to_string()))
            }
            _ => return Err(Error::schema(format!("{}:{line_no}", path.display()), "invalid UTF-8")),
        }
        offset += line.len();
    }
    Ok((records, None))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResumeReport {
    pub new_calls: usize,
    pub warnings: Vec<String>,
}

/// Complete a partial run: re-run only items without a record. Earlier lines
/// are kept verbatim; a corrupt trailing line is truncated first.
pub fn resume(run_dir: &Path, model: &dyn ChatModel, parallelism: Option<usize>) -> Result<(Vec<EvalRecord>, ResumeReport)> {
    let manifest = read_manifest(run_dir)?;
    let corpus_path = run_dir.join(CORPUS_FILE);
    let hash = sha256_file(&corpus_path)?;
    if hash != manifest.corpus_hash {
        return Err(Error::Invalid(format!(
            "{} does not match the manifest corpus hash",
            corpus_path.display()
        )));
    }
    let items = read_corpus(&corpus_path)?;
    let mut config = manifest.config();
    if let Some(p) = parallelism {
        config.parallelism = p;
    }
    config.validate()?;

    let mut report = ResumeReport::default();
    if model.identity() != manifest.adapter {
        report.warnings.push(format!(
            "adapter {} differs from the run's adapter {}",
            model.identity(),
            manifest.adapter
        ));
    }
    let records_path = run_dir.join(RECORDS_FILE);
    let (existing, corrupt_at) = scan_records(&records_path)?;
    if let Some(len) = corrupt_at {
        let file = OpenOptions::new()
            .write(true)
            .open(&records_path)
            .map_err(|e| Error::write(&records_path, e))?;
        file.set_len(len as u64).map_err(|e| Error::write(&records_path, e))?;
        file.sync_all().map_err(|e| Error::write(&records_path, e))?;
        report
            .warnings
            .push(format!("truncated corrupt trailing line in {}", records_path.display()));
    }

    let done: HashSet<&str> = existing.iter().map(|r| r.item_id.as_str()).collect();
    let pending: Vec<BiasItem> = items
        .iter()
        .filter(|i| !done.contains(i.id.as_str()))
        .cloned()
        .collect();
    report.new_calls = pending.len();
    let fresh = if pending.is_empty() {
        Vec::new()
    } else {
        execute(&pending, &config, model, &records_path)?
    };

    let mut by_id: BTreeMap<String, EvalRecord> = existing
        .into_iter()
        .chain(fresh)
        .map(|r| (r.item_id.clone(), r))
        .collect();
    let ordered = items.iter().filter_map(|i| by_id.remove(&i.id)).collect();
    Ok((ordered, report))
}

/// Read a complete run directory for offline analysis.
pub fn load_run(run_dir: &Path) -> Result<RunData> {
    let manifest = read_manifest(run_dir)?;
    let corpus = read_corpus(&run_dir.join(CORPUS_FILE))?;
    let records_path = run_dir.join(RECORDS_FILE);
    let (records, corrupt_at) = scan_records(&records_path)?;
    if corrupt_at.is_some() {
        return Err(Error::schema(
            records_path.display().to_string(),
            "corrupt trailing line; resume the run first",
        ));
    }
    Ok(RunData {
        manifest,
        corpus,
        records,
    })
}
