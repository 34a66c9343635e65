//! Markdown / CSV / JSON rendering of analysis tables.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::bow::{Direction, Scope, WordAttribution};
use crate::corpus::{CorpusStats, Source};
use crate::error::{Error, Result};
use crate::metrics::{CrossEvalReport, DeltaTable, GroupKey, MetricsTable};

pub use crate::runner::RunManifest;

pub const EMPTY_PLACEHOLDER: &str = "(no answered records)";
const NA: &str = "n/a";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Markdown,
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Invalid(format!("unknown format {s:?} (md, csv, json)"))),
        }
    }
}

/// Minus sign used for negative deltas in Markdown. CSV always uses ASCII.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinusStyle {
    #[default]
    Ascii,
    Typographic,
}

/// `{run_id}.{table}.{ext}`
pub fn output_name(run_id: &str, table: &str, format: Format) -> String {
    format!("{run_id}.{table}.{}", format.ext())
}

pub fn source_name(source: Source) -> &'static str {
    match source {
        Source::Stereoset => "StereoSet",
        Source::Crowspairs => "CrowS-Pairs",
    }
}

/// Display name for a normalized bias type.
pub fn bias_display(bias: &str) -> String {
    match bias {
        "race-color" => return "Race".into(),
        "socioeconomic" => return "Socioeconomic Status".into(),
        _ => {}
    }
    bias.split(['-', '_'])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

const STEREOSET_ORDER: [&str; 4] = ["gender", "race", "profession", "religion"];

fn bias_rank(source: Option<Source>, bias: &str) -> usize {
    match source {
        Some(Source::Stereoset) => STEREOSET_ORDER.iter().position(|b| *b == bias).unwrap_or(STEREOSET_ORDER.len()),
        _ => 0,
    }
}

/// Canonical row order: StereoSet's fixed bias order, otherwise alphabetical.
pub fn compare_keys(source: Option<Source>, a: &GroupKey, b: &GroupKey) -> Ordering {
    bias_rank(source, &a.bias_type)
        .cmp(&bias_rank(source, &b.bias_type))
        .then_with(|| a.bias_type.cmp(&b.bias_type))
        .then_with(|| a.target.cmp(&b.target))
}

fn ratio(v: f64) -> String {
    format!("{v:.2}")
}

/// Signed two-decimal delta. The sign follows the unrounded value, so a
/// small negative change renders as "-0.00".
pub fn signed(v: f64, minus: MinusStyle) -> String {
    let body = format!("{:.2}", v.abs());
    if v < 0.0 {
        match minus {
            MinusStyle::Ascii => format!("-{body}"),
            MinusStyle::Typographic => format!("\u{2212}{body}"),
        }
    } else {
        format!("+{body}")
    }
}

fn md_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn md_header(out: &mut String, cols: &[&str]) {
    md_row(out, &cols.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    md_row(out, &vec!["---".to_string(); cols.len()]);
}

fn key_cells(key: &GroupKey, with_target: bool) -> Vec<String> {
    let mut v = vec![bias_display(&key.bias_type)];
    if with_target {
        v.push(key.target.clone().unwrap_or_default());
    }
    v
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn opt_run(run: &Option<String>) -> &str {
    run.as_deref().unwrap_or("-")
}

pub fn render_metrics(table: &MetricsTable, format: Format) -> String {
    let with_target = table.group_by == crate::metrics::GroupBy::BiasAndTarget;
    let mut cells: Vec<_> = table.cells.iter().collect();
    cells.sort_by(|a, b| compare_keys(table.source, &a.key, &b.key));
    match format {
        Format::Json => json_text(table),
        Format::Csv => {
            let header = [
                "run_id",
                "bias_type",
                "target",
                "stereotype_ratio",
                "anti_ratio",
                "unrelated_ratio",
                "answered",
                "excluded",
            ];
            let rows = cells
                .iter()
                .map(|c| {
                    let r = |v: f64| if c.empty { String::new() } else { ratio(v) };
                    vec![
                        opt_run(&table.run_id).to_string(),
                        c.key.bias_type.clone(),
                        c.key.target.clone().unwrap_or_default(),
                        r(c.stereotype_ratio),
                        r(c.anti_ratio),
                        r(c.unrelated_ratio),
                        c.answered.to_string(),
                        c.excluded.to_string(),
                    ]
                })
                .collect();
            csv_text(&header, rows)
        }
        Format::Markdown => {
            let show_unrelated = table.source != Some(Source::Crowspairs);
            let mut out = String::new();
            let _ = writeln!(out, "Run: `{}`", opt_run(&table.run_id));
            out.push('\n');
            let mut cols = vec!["Bias Type"];
            if with_target {
                cols.push("Target");
            }
            cols.extend(["Stereotype", "Anti-Stereotype"]);
            if show_unrelated {
                cols.push("Unrelated");
            }
            cols.extend(["Answered", "Excluded"]);
            md_header(&mut out, &cols);
            for c in &cells {
                let r = |v: f64| if c.empty { NA.to_string() } else { ratio(v) };
                let mut row = key_cells(&c.key, with_target);
                row.push(r(c.stereotype_ratio));
                row.push(r(c.anti_ratio));
                if show_unrelated {
                    row.push(r(c.unrelated_ratio));
                }
                row.push(c.answered.to_string());
                row.push(c.excluded.to_string());
                md_row(&mut out, &row);
            }
            if !cells.is_empty() {
                let excluded: usize = cells.iter().map(|c| c.excluded).sum();
                let _ = writeln!(
                    out,
                    "\nExcluded non-answers: {excluded} (refusals, unparseable replies and adapter errors; not counted in any ratio)."
                );
            }
            out
        }
    }
}

/// Baseline column plus one signed-delta column per variant. All tables are
/// expected to share the same baseline run.
pub fn render_deltas(baseline_tag: &str, variants: &[(String, DeltaTable)], format: Format, minus: MinusStyle) -> String {
    let source = variants.iter().find_map(|(_, t)| t.source);
    let with_target = variants
        .first()
        .is_some_and(|(_, t)| t.group_by == crate::metrics::GroupBy::BiasAndTarget);
    let mut keys: Vec<GroupKey> = variants.iter().flat_map(|(_, t)| t.cells.iter().map(|c| c.key.clone())).collect();
    keys.sort_by(|a, b| compare_keys(source, a, b));
    keys.dedup();
    let baseline_of = |k: &GroupKey| {
        variants
            .iter()
            .find_map(|(_, t)| t.cells.iter().find(|c| &c.key == k).and_then(|c| c.baseline))
    };
    let delta_of = |t: &DeltaTable, k: &GroupKey| t.cells.iter().find(|c| &c.key == k).and_then(|c| c.delta);
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                baseline_tag: &'a str,
                variants: Vec<(&'a str, &'a DeltaTable)>,
            }
            json_text(&Out {
                baseline_tag,
                variants: variants.iter().map(|(t, d)| (t.as_str(), d)).collect(),
            })
        }
        Format::Csv => {
            let header = [
                "bias_type",
                "target",
                "baseline_tag",
                "baseline_run",
                "baseline",
                "variant_tag",
                "variant_run",
                "variant",
                "delta",
            ];
            let mut rows = Vec::new();
            for k in &keys {
                for (tag, t) in variants {
                    let Some(c) = t.cells.iter().find(|c| &c.key == k) else {
                        continue;
                    };
                    rows.push(vec![
                        k.bias_type.clone(),
                        k.target.clone().unwrap_or_default(),
                        baseline_tag.to_string(),
                        opt_run(&t.baseline_run).to_string(),
                        c.baseline.map(ratio).unwrap_or_default(),
                        tag.clone(),
                        opt_run(&t.variant_run).to_string(),
                        c.variant.map(ratio).unwrap_or_default(),
                        c.delta.map(|d| signed(d, MinusStyle::Ascii)).unwrap_or_default(),
                    ]);
                }
            }
            csv_text(&header, rows)
        }
        Format::Markdown => {
            let mut out = String::new();
            let baseline_run = variants.first().map(|(_, t)| opt_run(&t.baseline_run)).unwrap_or("-");
            let _ = write!(out, "Baseline {baseline_tag}: `{baseline_run}`");
            for (tag, t) in variants {
                let _ = write!(out, "; {tag}: `{}`", opt_run(&t.variant_run));
            }
            out.push_str("\n\n");
            let mut cols = vec!["Bias Type".to_string()];
            if with_target {
                cols.push("Target".into());
            }
            cols.push(baseline_tag.to_string());
            cols.extend(variants.iter().map(|(t, _)| t.clone()));
            md_header(&mut out, &cols.iter().map(String::as_str).collect::<Vec<_>>());
            for k in &keys {
                let mut row = key_cells(k, with_target);
                row.push(baseline_of(k).map(ratio).unwrap_or_else(|| NA.into()));
                for (_, t) in variants {
                    row.push(delta_of(t, k).map(|d| signed(d, minus)).unwrap_or_else(|| NA.into()));
                }
                md_row(&mut out, &row);
            }
            out
        }
    }
}

pub fn render_cross(report: &CrossEvalReport, format: Format) -> String {
    let with_target = report.group_by == crate::metrics::GroupBy::BiasAndTarget;
    let mut sorted: Vec<&crate::metrics::CrossRow> = report.rows.iter().collect();
    sorted.sort_by(|a, b| compare_keys(report.source, &a.key, &b.key));
    match format {
        Format::Json => json_text(report),
        Format::Csv => {
            let header = ["bias_type", "target", "train_tag", "test_tag", "stereotype_ratio", "answered"];
            let mut rows = Vec::new();
            for row in &sorted {
                for (col, cell) in report.columns.iter().zip(&row.cells) {
                    let (r, n) = match cell {
                        Some(c) if !c.empty => (ratio(c.stereotype_ratio), c.answered.to_string()),
                        Some(c) => (String::new(), c.answered.to_string()),
                        None => (String::new(), String::new()),
                    };
                    rows.push(vec![
                        row.key.bias_type.clone(),
                        row.key.target.clone().unwrap_or_default(),
                        col.train_tag.clone(),
                        col.test_tag.clone(),
                        r,
                        n,
                    ]);
                }
            }
            csv_text(&header, rows)
        }
        Format::Markdown => {
            let mut out = String::new();
            let mut cols = vec!["Bias Type".to_string()];
            if with_target {
                cols.push("Target".into());
            }
            cols.extend(report.columns.iter().map(|c| format!("{} on {}", c.train_tag, c.test_tag)));
            md_header(&mut out, &cols.iter().map(String::as_str).collect::<Vec<_>>());
            for row in &sorted {
                let mut cells = key_cells(&row.key, with_target);
                cells.extend(row.cells.iter().map(|c| match c {
                    Some(c) if !c.empty => ratio(c.stereotype_ratio),
                    _ => NA.to_string(),
                }));
                md_row(&mut out, &cells);
            }
            out
        }
    }
}

fn direction_header(direction: Direction, k: usize) -> String {
    match direction {
        Direction::ImpelledStereotype => format!("Top {k} words that impelled it choose a stereotype"),
        Direction::ImpelledAnti => format!("Top {k} words that impelled it to choose an anti-stereotype"),
    }
}

fn scope_display(scope: &Scope) -> String {
    match scope {
        Scope::All => "All Biases".into(),
        Scope::Bias(b) => bias_display(b),
    }
}

/// Sections per direction (stereotype first), one row per scope.
pub fn render_bow(attrs: &[WordAttribution], k: usize, run_id: &str, source: Option<Source>, format: Format) -> String {
    let mut sorted: Vec<&WordAttribution> = attrs.iter().collect();
    let scope_key = |s: &Scope| match s {
        Scope::All => None,
        Scope::Bias(b) => Some(GroupKey {
            bias_type: b.clone(),
            target: None,
        }),
    };
    sorted.sort_by(|a, b| {
        let dir = |d: Direction| (d == Direction::ImpelledAnti) as u8;
        dir(a.direction).cmp(&dir(b.direction)).then_with(|| match (scope_key(&a.scope), scope_key(&b.scope)) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(x), Some(y)) => compare_keys(source, &x, &y),
        })
    });
    match format {
        Format::Json => json_text(&sorted),
        Format::Csv => {
            let header = ["run_id", "direction", "scope", "rank", "token", "score", "support_count"];
            let mut rows = Vec::new();
            for a in &sorted {
                let dir = match a.direction {
                    Direction::ImpelledStereotype => "impelled_stereotype",
                    Direction::ImpelledAnti => "impelled_anti",
                };
                for (i, r) in a.ranked.iter().enumerate() {
                    rows.push(vec![
                        run_id.to_string(),
                        dir.to_string(),
                        a.scope.to_string(),
                        (i + 1).to_string(),
                        r.token.clone(),
                        r.score.to_string(),
                        r.support_count.to_string(),
                    ]);
                }
            }
            csv_text(&header, rows)
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "Run: `{run_id}`");
            for direction in Direction::BOTH {
                let section: Vec<_> = sorted.iter().filter(|a| a.direction == direction).collect();
                if section.is_empty() {
                    continue;
                }
                let _ = writeln!(out, "\n**{}**\n", direction_header(direction, k));
                md_header(&mut out, &["Scope", "Words"]);
                for a in section {
                    let words = if a.ranked.is_empty() {
                        EMPTY_PLACEHOLDER.to_string()
                    } else {
                        a.ranked.iter().map(|r| format!("'{}'", r.token)).collect::<Vec<_>>().join(", ")
                    };
                    md_row(&mut out, &[scope_display(&a.scope), words]);
                }
            }
            out
        }
    }
}

pub fn render_stats(stats: &CorpusStats, format: Format) -> String {
    let key = |b: &str| GroupKey {
        bias_type: b.to_string(),
        target: None,
    };
    let mut biases: Vec<&String> = stats.per_bias.keys().collect();
    biases.sort_by(|a, b| compare_keys(stats.source, &key(a), &key(b)));
    match format {
        Format::Json => json_text(stats),
        Format::Csv => {
            let mut rows = Vec::new();
            for b in &biases {
                rows.push(vec![b.to_string(), String::new(), stats.per_bias[*b].to_string()]);
                for (t, n) in stats.per_target.get(*b).into_iter().flatten() {
                    rows.push(vec![b.to_string(), t.clone(), n.to_string()]);
                }
            }
            csv_text(&["bias_type", "target", "count"], rows)
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "Source: {}; items: {}\n",
                stats.source.map(source_name).unwrap_or("-"),
                stats.total
            );
            md_header(&mut out, &["Bias Type", "Items"]);
            for b in &biases {
                md_row(&mut out, &[bias_display(b), stats.per_bias[*b].to_string()]);
            }
            if !stats.per_target.is_empty() {
                out.push('\n');
                md_header(&mut out, &["Bias Type", "Target", "Items"]);
                for b in &biases {
                    for (t, n) in stats.per_target.get(*b).into_iter().flatten() {
                        md_row(&mut out, &[bias_display(b), t.clone(), n.to_string()]);
                    }
                }
            }
            out
        }
    }
}

pub fn render_manifest(manifest: &RunManifest) -> String {
    json_text(manifest)
}
