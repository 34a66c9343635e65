//! Stereotype-selection ratios per bias type (or bias type and target),
//! signed deltas between two runs, and train × test cross-evaluation grids.
//!
//! Ratios are computed over answered records only. Refusals, unparseable
//! replies and transport/protocol errors are excluded from the denominator
//! and counted separately.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Source};
use crate::error::{Error, Result};
use crate::runner::EvalRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    Bias,
    BiasAndTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub bias_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl GroupKey {
    pub fn of(record: &EvalRecord, group_by: GroupBy) -> Self {
        Self {
            bias_type: record.bias_type.clone(),
            target: match group_by {
                GroupBy::Bias => None,
                GroupBy::BiasAndTarget => record.target.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsCell {
    pub key: GroupKey,
    pub answered: usize,
    pub excluded: usize,
    pub stereotype_count: usize,
    pub anti_count: usize,
    pub unrelated_count: usize,
    pub stereotype_ratio: f64,
    pub anti_ratio: f64,
    pub unrelated_ratio: f64,
    /// No answered records; all ratios are 0.
    pub empty: bool,
}

impl MetricsCell {
    fn from_counts(key: GroupKey, counts: Counts) -> Self {
        let answered = counts.stereotype + counts.anti + counts.unrelated;
        let ratio = |n: usize| if answered == 0 { 0.0 } else { n as f64 / answered as f64 };
        Self {
            key,
            answered,
            excluded: counts.excluded,
            stereotype_count: counts.stereotype,
            anti_count: counts.anti,
            unrelated_count: counts.unrelated,
            stereotype_ratio: ratio(counts.stereotype),
            anti_ratio: ratio(counts.anti),
            unrelated_ratio: ratio(counts.unrelated),
            empty: answered == 0,
        }
    }

    pub fn total(&self) -> usize {
        self.answered + self.excluded
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    stereotype: usize,
    anti: usize,
    unrelated: usize,
    excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub run_id: Option<String>,
    pub source: Option<Source>,
    pub group_by: GroupBy,
    pub cells: Vec<MetricsCell>,
}

impl MetricsTable {
    pub fn cell(&self, key: &GroupKey) -> Option<&MetricsCell> {
        self.cells.iter().find(|c| &c.key == key)
    }

    pub fn bias(&self, bias_type: &str) -> Option<&MetricsCell> {
        self.cells
            .iter()
            .find(|c| c.key.bias_type == bias_type && c.key.target.is_none())
    }
}

fn source_of(item_id: &str) -> Option<Source> {
    item_id.split_once(':')?.0.parse().ok()
}

/// Group records and compute selection ratios. Cells come out in
/// lexicographic key order.
pub fn aggregate(records: &[EvalRecord], group_by: GroupBy) -> Result<MetricsTable> {
    let run_id = records.first().map(|r| r.run_id.clone());
    if let Some(id) = &run_id {
        if let Some(other) = records.iter().find(|r| &r.run_id != id) {
            return Err(Error::Invalid(format!(
                "records span runs {id:?} and {:?}",
                other.run_id
            )));
        }
    }
    let mut sources = records.iter().map(|r| source_of(&r.item_id));
    let source = match sources.next() {
        Some(first) => sources.all(|s| s == first).then_some(first).flatten(),
        None => None,
    };

    let mut groups = BTreeMap::<GroupKey, Counts>::new();
    for record in records {
        let counts = groups.entry(GroupKey::of(record, group_by)).or_default();
        match record.answer().and_then(|a| a.resolved_label) {
            Some(Label::Stereotype) => counts.stereotype += 1,
            Some(Label::AntiStereotype) => counts.anti += 1,
            Some(Label::Unrelated) => counts.unrelated += 1,
            None => counts.excluded += 1,
        }
    }
    Ok(MetricsTable {
        run_id,
        source,
        group_by,
        cells: groups
            .into_iter()
            .map(|(k, c)| MetricsCell::from_counts(k, c))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub key: GroupKey,
    pub baseline: Option<f64>,
    pub variant: Option<f64>,
    /// `variant - baseline`; `None` marks the group incomparable (missing or
    /// empty on one side).
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub baseline_run: Option<String>,
    pub variant_run: Option<String>,
    pub source: Option<Source>,
    pub group_by: GroupBy,
    pub cells: Vec<DeltaCell>,
}

pub fn delta_table(baseline: &MetricsTable, variant: &MetricsTable) -> Result<DeltaTable> {
    if baseline.group_by != variant.group_by {
        return Err(Error::Invalid(format!(
            "grouping mismatch: baseline {:?}, variant {:?}",
            baseline.group_by, variant.group_by
        )));
    }
    let ratio = |t: &MetricsTable, k: &GroupKey| {
        t.cell(k).filter(|c| !c.empty).map(|c| c.stereotype_ratio)
    };
    let keys: BTreeSet<&GroupKey> = baseline
        .cells
        .iter()
        .chain(&variant.cells)
        .map(|c| &c.key)
        .collect();
    let cells = keys
        .into_iter()
        .map(|k| {
            let (b, v) = (ratio(baseline, k), ratio(variant, k));
            DeltaCell {
                key: k.clone(),
                baseline: b,
                variant: v,
                delta: b.zip(v).map(|(b, v)| v - b),
            }
        })
        .collect();
    Ok(DeltaTable {
        baseline_run: baseline.run_id.clone(),
        variant_run: variant.run_id.clone(),
        source: baseline.source.or(variant.source),
        group_by: baseline.group_by,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossColumn {
    pub train_tag: String,
    pub test_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub stereotype_ratio: f64,
    pub answered: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub key: GroupKey,
    /// One entry per column; `None` when the group is absent from that
    /// column's test corpus.
    pub cells: Vec<Option<CrossCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalReport {
    pub group_by: GroupBy,
    /// Common source of all columns, if they agree.
    pub source: Option<Source>,
    pub columns: Vec<CrossColumn>,
    pub rows: Vec<CrossRow>,
}

/// Lay out `(train_tag, test_tag, table)` runs as a grid: one column per run
/// in input order, one row per group seen in any test corpus.
pub fn cross_matrix(runs: &[(String, String, MetricsTable)]) -> Result<CrossEvalReport> {
    let group_by = runs.first().map(|r| r.2.group_by).unwrap_or_default();
    let mut columns = Vec::with_capacity(runs.len());
    for (train, test, table) in runs {
        if table.group_by != group_by {
            return Err(Error::Invalid("cross matrix mixes groupings".into()));
        }
        let col = CrossColumn {
            train_tag: train.clone(),
            test_tag: test.clone(),
        };
        if columns.contains(&col) {
            return Err(Error::Invalid(format!("duplicate cross key ({train}, {test})")));
        }
        columns.push(col);
    }
    let keys: BTreeSet<&GroupKey> = runs
        .iter()
        .flat_map(|r| r.2.cells.iter().map(|c| &c.key))
        .collect();
    let rows = keys
        .into_iter()
        .map(|k| CrossRow {
            key: k.clone(),
            cells: runs
                .iter()
                .map(|(_, _, t)| {
                    t.cell(k).map(|c| CrossCell {
                        stereotype_ratio: c.stereotype_ratio,
                        answered: c.answered,
                        empty: c.empty,
                    })
                })
                .collect(),
        })
        .collect();
    let mut sources = runs.iter().map(|r| r.2.source);
    let source = sources.next().flatten().filter(|s| sources.all(|o| o == Some(*s)));
    Ok(CrossEvalReport {
        group_by,
        source,
        columns,
        rows,
    })
}
