use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use stereoprobe::adapter::{AdapterEndpoint, AdapterError, HealthStatus, HttpModel, Secret, API_KEY_ENV};
use stereoprobe::augment::{self, AugmentMode, OnError, ParaphraseTemplate};
use stereoprobe::bow::{self, BowConfig, Direction, Scope};
use stereoprobe::corpus::{self, SplitSpec};
use stereoprobe::metrics::{self, GroupBy, MetricsTable};
use stereoprobe::promptkit::{BindingPolicy, SysRole};
use stereoprobe::report::{self, Format, MinusStyle};
use stereoprobe::runner::{self, RunConfig, RunData};
use stereoprobe::tuneprep::{self, CountCheck, TuneDefaults, TuneTag, TuneVariant};
use stereoprobe::{ChatModel, DecodeParams, Error, Label, MockModel, MockPolicy, PromptMode, PromptPlan, Source};

use crate::config::{resolve, resolve_or, FileConfig};
use crate::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Transport,
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Validation,
            message: message.into(),
        }
    }

    fn transport(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Transport,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::Validation => 1,
            ErrorClass::Transport => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let class = match self.class {
            ErrorClass::Validation => "validation",
            ErrorClass::Transport => "transport",
        };
        serde_json::json!({ "error": { "class": class, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let transport = match &e {
            Error::Adapter(AdapterError::Config(_)) => false,
            Error::Adapter(_) => true,
            other => other.is_transport(),
        };
        if transport {
            CliError::transport(e.to_string())
        } else {
            CliError::validation(e.to_string())
        }
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parse a snake_case enum through its serde representation.
fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| CliError::validation(format!("unknown {what} {s:?}")))
}

fn parse<T: std::str::FromStr>(s: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| CliError::validation(e.to_string()))
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::validation(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_model(args: &AdapterArgs, file: &FileConfig) -> CliResult<Box<dyn ChatModel>> {
    let spec = resolve("adapter", args.adapter.clone(), file.adapter.clone())?
        .ok_or_else(|| CliError::validation("no adapter given (--adapter, STEREOPROBE_ADAPTER or config file)"))?;
    if spec.starts_with("mock:") {
        let policy: MockPolicy = spec.parse()?;
        return Ok(Box::new(MockModel::new(policy)));
    }
    let model = resolve("model", args.model.clone(), file.model.clone())?
        .ok_or_else(|| CliError::validation("HTTP adapters need --model"))?;
    let mut endpoint = AdapterEndpoint::new(spec, model)?;
    if let Some(secs) = resolve("timeout_secs", args.timeout_secs, file.timeout_secs)? {
        endpoint.timeout = std::time::Duration::from_secs(secs);
    }
    if let Some(n) = resolve("max_retries", args.max_retries, file.max_retries)? {
        endpoint.max_retries = n;
    }
    endpoint.auth_token = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(Secret::new);
    Ok(Box::new(HttpModel::new(endpoint)))
}

fn hint_list(inline: &Option<String>, file: &Option<PathBuf>) -> CliResult<Option<Vec<String>>> {
    let words: Vec<String> = match (inline, file) {
        (Some(s), _) => s.split(',').map(|w| w.trim().to_string()).collect(),
        (None, Some(p)) => std::fs::read_to_string(p)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", p.display())))?
            .lines()
            .map(|w| w.trim().to_string())
            .collect(),
        (None, None) => return Ok(None),
    };
    Ok(Some(words.into_iter().filter(|w| !w.is_empty()).collect()))
}

fn group_by(s: &str) -> CliResult<GroupBy> {
    parse_enum("grouping", s)
}

fn metrics_for(run: &RunData, grouping: GroupBy) -> CliResult<MetricsTable> {
    let mut table = metrics::aggregate(&run.records, grouping)?;
    table.run_id.get_or_insert_with(|| run.manifest.run_id.clone());
    if table.source.is_none() {
        table.source = run.corpus.first().map(|i| i.source);
    }
    Ok(table)
}

pub fn run(cli: Cli) -> CliResult {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Split(a) => split(a, &file),
        Command::Eval(a) => eval(a, &file),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Delta(a) => delta(a),
        Command::Cross(a) => cross(a),
        Command::Augment(a) => augment_cmd(a, &file),
        Command::Tuneprep(TuneprepCommand::Emit(a)) => tune_emit(a, &file),
        Command::Tuneprep(TuneprepCommand::Validate(a)) => tune_validate(a),
        Command::Bow(a) => bow_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Healthcheck(a) => healthcheck(a, &file),
    }
}

fn ingest(a: IngestArgs) -> CliResult {
    let source: Source = parse(&a.source)?;
    let (items, load) = corpus::load(source, &a.input)?;
    corpus::write_corpus(&a.out, &items)?;
    for w in &load.warnings {
        eprintln!("warning: {w}");
    }
    let stats = corpus::corpus_stats(&items)?;
    println!(
        "ingested {} {} items ({} dropped) into {}",
        load.kept,
        report::source_name(source),
        load.dropped,
        a.out.display()
    );
    print!("{}", report::render_stats(&stats, Format::Markdown));
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    let items = corpus::read_corpus(&a.corpus)?;
    let stats = corpus::corpus_stats(&items)?;
    emit(&report::render_stats(&stats, parse(&a.output.format)?), a.output.out.as_deref())
}

fn split(a: SplitArgs, file: &FileConfig) -> CliResult {
    let items = corpus::read_corpus(&a.corpus)?;
    let source = items
        .first()
        .map(|i| i.source)
        .ok_or_else(|| CliError::validation(format!("{} is empty", a.corpus.display())))?;
    let seed = resolve_or("seed", a.seed, file.seed, 0)?;
    let spec = match a.per_bias {
        Some(n) => SplitSpec::new(n, seed)?,
        None => SplitSpec::default_for(source, seed),
    };
    let (train, test) = corpus::split_train_test(&items, spec)?;
    corpus::write_corpus(&a.train_out, &train)?;
    corpus::write_corpus(&a.test_out, &test)?;
    println!(
        "train {} items ({} per bias, seed {}), test {} items",
        train.len(),
        spec.per_bias_train_count,
        spec.seed,
        test.len()
    );
    Ok(())
}

fn eval(a: EvalArgs, file: &FileConfig) -> CliResult {
    let model = build_model(&a.adapter, file)?;
    let parallelism = resolve("parallelism", a.parallelism, file.parallelism)?;
    let records = if a.resume {
        let (records, rep) = runner::resume(&a.run_dir, model.as_ref(), parallelism)?;
        for w in &rep.warnings {
            eprintln!("warning: {w}");
        }
        println!("resumed: {} new calls", rep.new_calls);
        records
    } else {
        let corpus_path = a.corpus.as_ref().expect("clap enforces --corpus");
        let items = corpus::read_corpus(corpus_path)?;
        let mode: PromptMode = parse(&a.mode)?;
        let mut plan = PromptPlan::new(mode);
        plan.binding_policy = parse_enum::<BindingPolicy>("binding policy", &a.binding)?;
        plan.seed = resolve_or("seed", a.seed, file.seed, 0)?;
        if a.sysrole {
            plan.sysrole = SysRole::FairnessAugmented;
        }
        if let Some(words) = hint_list(&a.hints, &a.hints_file)? {
            plan = plan.with_hints(words)?;
        }
        let run_id = match &a.run_id {
            Some(id) => id.clone(),
            None => a
                .run_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::validation("cannot derive a run id; pass --run-id"))?,
        };
        let mut config = RunConfig::new(run_id, plan);
        let defaults = DecodeParams::default();
        config.params = DecodeParams {
            max_tokens: resolve_or("max_tokens", a.max_tokens, file.max_tokens, defaults.max_tokens)?,
            temperature: resolve_or("temperature", a.temperature, file.temperature, defaults.temperature)?,
            n: defaults.n,
        };
        config.parallelism = parallelism.unwrap_or(1);
        config.dataset_ref = if a.dataset_ref.is_empty() {
            corpus_path.display().to_string()
        } else {
            a.dataset_ref.clone()
        };
        config.model_ref = model.identity();
        runner::run_eval(&items, &config, model.as_ref(), &a.run_dir)?
    };
    let answered = records.iter().filter(|r| r.answer().is_some()).count();
    let transport_failures = records
        .iter()
        .filter(|r| r.error.as_ref().is_some_and(|e| e.class == "transport"))
        .count();
    println!(
        "{} records in {} ({answered} answered, {} excluded)",
        records.len(),
        a.run_dir.display(),
        records.len() - answered
    );
    if !records.is_empty() && transport_failures == records.len() {
        return Err(CliError::transport(format!(
            "all {} requests failed with transport errors",
            records.len()
        )));
    }
    Ok(())
}

fn metrics_cmd(a: MetricsArgs) -> CliResult {
    let run = runner::load_run(&a.run_dir)?;
    let table = metrics_for(&run, group_by(&a.group_by)?)?;
    emit(&report::render_metrics(&table, parse(&a.output.format)?), a.output.out.as_deref())
}

fn split_pair<'a>(s: &'a str, sep: char, what: &str) -> CliResult<(&'a str, &'a str)> {
    s.split_once(sep)
        .filter(|(l, r)| !l.is_empty() && !r.is_empty())
        .ok_or_else(|| CliError::validation(format!("expected {what}, got {s:?}")))
}

fn delta(a: DeltaArgs) -> CliResult {
    let grouping = group_by(&a.group_by)?;
    let baseline = metrics_for(&runner::load_run(&a.baseline)?, grouping)?;
    let mut tables = Vec::new();
    for v in &a.variants {
        let (tag, dir) = split_pair(v, '=', "TAG=RUN_DIR")?;
        let variant = metrics_for(&runner::load_run(Path::new(dir))?, grouping)?;
        tables.push((tag.to_string(), metrics::delta_table(&baseline, &variant)?));
    }
    let minus = if a.typographic_minus {
        MinusStyle::Typographic
    } else {
        MinusStyle::Ascii
    };
    let text = report::render_deltas(&a.baseline_tag, &tables, parse(&a.output.format)?, minus);
    emit(&text, a.output.out.as_deref())
}

fn cross(a: CrossArgs) -> CliResult {
    let grouping = group_by(&a.group_by)?;
    let mut runs = Vec::new();
    for r in &a.runs {
        let (tags, dir) = split_pair(r, '=', "TRAIN:TEST=RUN_DIR")?;
        let (train, test) = split_pair(tags, ':', "TRAIN:TEST=RUN_DIR")?;
        let table = metrics_for(&runner::load_run(Path::new(dir))?, grouping)?;
        runs.push((train.to_string(), test.to_string(), table));
    }
    let matrix = metrics::cross_matrix(&runs)?;
    emit(&report::render_cross(&matrix, parse(&a.output.format)?), a.output.out.as_deref())
}

fn augment_cmd(a: AugmentArgs, file: &FileConfig) -> CliResult {
    let model = build_model(&a.adapter, file)?;
    let train = corpus::read_corpus(&a.corpus)?;
    let mut template = match a.template.as_str() {
        "t5" | "t5_style" => ParaphraseTemplate::t5(),
        "instruct" | "instruct_style" => ParaphraseTemplate::instruct(),
        other => return Err(CliError::validation(format!("unknown template {other:?} (t5, instruct)"))),
    };
    if let Some(text) = &a.instruction {
        template.instruct_text = text.clone();
    }
    let mode: AugmentMode = parse_enum("augment mode", &a.mode)?;
    let on_error: OnError = parse_enum("error policy", &a.on_error)?;
    let parallelism = resolve_or("parallelism", a.parallelism, file.parallelism, 1)?;
    let outcome = augment::augment_training_set(&train, model.as_ref(), &template, mode, on_error, parallelism)?;
    augment::write_augmented(&a.out, &outcome.items)?;
    let flagged = outcome.items.iter().filter(|i| !i.warning_flags.is_empty()).count();
    for s in &outcome.skipped {
        eprintln!("warning: skipped {}: {}", s.item_id, s.source);
    }
    println!(
        "wrote {} items to {} ({flagged} flagged, {} skipped)",
        outcome.items.len(),
        a.out.display(),
        outcome.skipped.len()
    );
    Ok(())
}

fn tune_emit(a: TuneEmitArgs, file: &FileConfig) -> CliResult {
    let train = corpus::read_corpus(&a.train)?;
    let tag: TuneTag = parse(&a.variant)?;
    let variant = TuneVariant {
        tag,
        hint_words: hint_list(&a.hints, &a.hints_file)?,
        mode: parse(&a.mode)?,
    };
    let defaults = TuneDefaults {
        binding_policy: parse_enum("binding policy", &a.binding)?,
        seed: resolve_or("seed", a.seed, file.seed, 0)?,
        implicit_target: parse_enum::<Label>("label", &a.implicit_target)?,
        ..TuneDefaults::default()
    };
    let n = tuneprep::emit_finetune_file(&a.out, &train, &variant, &defaults)?;
    println!("wrote {n} {tag} examples to {}", a.out.display());
    Ok(())
}

fn tune_validate(a: TuneValidateArgs) -> CliResult {
    let check = match (&a.train, a.per_bias) {
        (Some(train), Some(per_bias)) => Some(CountCheck {
            per_bias,
            line_bias: corpus::read_corpus(train)?.into_iter().map(|i| i.bias_type).collect(),
        }),
        _ => None,
    };
    let rep = tuneprep::validate_finetune_file(&a.file, check.as_ref());
    for f in &rep.failures {
        eprintln!("line {}: {}", f.line, f.reason);
    }
    for m in &rep.count_mismatches {
        eprintln!("count: {m}");
    }
    if rep.passed {
        println!("{}: {} lines ok", a.file.display(), rep.lines);
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{} failed validation ({} line failures, {} count mismatches)",
            a.file.display(),
            rep.failures.len(),
            rep.count_mismatches.len()
        )))
    }
}

fn bow_cmd(a: BowArgs) -> CliResult {
    let run = runner::load_run(&a.run_dir)?;
    let config = BowConfig {
        k: a.k,
        include_context: a.include_context,
    };
    let attrs = bow::attribute_all_scopes(&run.records, &run.corpus, &config)?;
    let source = run.corpus.first().map(|i| i.source);
    let text = report::render_bow(&attrs, a.k, &run.manifest.run_id, source, parse(&a.output.format)?);
    emit(&text, a.output.out.as_deref())?;
    if let (Some(n), Some(path)) = (a.hints, &a.hints_out) {
        let all = attrs
            .iter()
            .find(|x| x.scope == Scope::All && x.direction == Direction::ImpelledStereotype)
            .expect("all-scope attribution is always produced");
        let sel = bow::hint_words_from(all, n)?;
        if let Some(w) = &sel.warning {
            eprintln!("warning: {w}");
        }
        let mut body = sel.words.join("\n");
        body.push('\n');
        std::fs::write(path, body).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let run = runner::load_run(&a.run_dir)?;
    let formats: Vec<Format> = a.formats.split(',').map(|f| parse(f.trim())).collect::<CliResult<_>>()?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::validation(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let id = &run.manifest.run_id;
    let by_bias = metrics_for(&run, GroupBy::Bias)?;
    let by_target = metrics_for(&run, GroupBy::BiasAndTarget)?;
    let stats = corpus::corpus_stats(&run.corpus)?;
    let attrs = bow::attribute_all_scopes(&run.records, &run.corpus, &BowConfig { k: a.k, include_context: false })?;
    let mut written = Vec::new();
    let mut write = |name: String, text: String| -> CliResult {
        let path = a.out_dir.join(&name);
        std::fs::write(&path, text).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
        written.push(name);
        Ok(())
    };
    for f in formats {
        write(report::output_name(id, "metrics", f), report::render_metrics(&by_bias, f))?;
        write(report::output_name(id, "metrics_by_target", f), report::render_metrics(&by_target, f))?;
        write(report::output_name(id, "stats", f), report::render_stats(&stats, f))?;
        write(report::output_name(id, "bow", f), report::render_bow(&attrs, a.k, id, stats.source, f))?;
    }
    write(report::output_name(id, "manifest", Format::Json), report::render_manifest(&run.manifest))?;
    for name in &written {
        println!("{}", a.out_dir.join(name).display());
    }
    Ok(())
}

fn healthcheck(a: HealthArgs, file: &FileConfig) -> CliResult {
    let model = build_model(&a.adapter, file)?;
    match model.health_check() {
        HealthStatus::Reachable { latency } => {
            println!("{}: reachable ({} ms)", model.identity(), latency.as_millis());
            Ok(())
        }
        HealthStatus::Unreachable { reason } => {
            Err(CliError::transport(format!("{}: unreachable: {reason}", model.identity())))
        }
        HealthStatus::Failed(e) => Err(CliError::from(e)),
    }
}
