//! Report files and their text renderings.
//!
//! Sentence-level results render as a per-dataset summary, a per-subcorpus
//! breakdown of the target probe (OOD rows included), an OOV breakdown and
//! the target confusion matrices. Group results render as a per-dataset
//! summary plus one sweep CSV per classifier.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use seqmia_core::attack::{AttackReport, DatasetId, GroupAttackResult, SweepCurve};
use seqmia_core::classifiers::ClassifierKind;
use seqmia_core::corpus::{CorpusStats, Tier};
use seqmia_core::features::{FeatureSchema, Label};
use seqmia_core::splitter::CorpusSplits;

pub const SENTENCE_REPORT_FORMAT: &str = "seqmia-sentence-report/v1";
pub const GROUP_REPORT_FORMAT: &str = "seqmia-group-report/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceReportFile {
    pub format: String,
    pub feature_columns: Vec<String>,
    pub reports: Vec<AttackReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupReportFile {
    pub format: String,
    pub group_size: usize,
    pub n_groups: usize,
    pub delta_bleu: f64,
    /// How training groups were drawn.
    pub sampling: String,
    pub results: Vec<GroupAttackResult>,
}

/// Left-aligned first column, right-aligned others, two spaces apart.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate().take(cols) {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = width[i]);
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, headers);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for r in rows {
        line(&mut out, r);
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn find(reports: &[AttackReport], kind: ClassifierKind, dataset: DatasetId) -> Option<&AttackReport> {
    reports.iter().find(|r| r.classifier == kind && r.dataset == dataset)
}

fn kinds(reports: &[AttackReport]) -> Vec<ClassifierKind> {
    let mut seen = Vec::new();
    for r in reports {
        if !seen.contains(&r.classifier) {
            seen.push(r.classifier);
        }
    }
    seen
}

fn dataset_table(reports: &[AttackReport], datasets: &[DatasetId]) -> String {
    let present: Vec<DatasetId> = datasets
        .iter()
        .copied()
        .filter(|d| reports.iter().any(|r| r.dataset == *d))
        .collect();
    let mut headers = vec!["classifier".to_string()];
    headers.extend(present.iter().map(|d| d.to_string()));
    let rows: Vec<Vec<String>> = kinds(reports)
        .into_iter()
        .map(|k| {
            let mut row = vec![k.abbrev().to_string()];
            row.extend(
                present
                    .iter()
                    .map(|d| find(reports, k, *d).map_or_else(|| "-".to_string(), |r| pct(r.accuracy))),
            );
            row
        })
        .collect();
    render_table(&headers, &rows)
}

fn slice_table(reports: &[AttackReport], rows_spec: &[(String, DatasetId, String)], with_n: bool) -> String {
    let ks = kinds(reports);
    let mut headers = vec!["slice".to_string()];
    if with_n {
        headers.push("n".to_string());
    }
    headers.extend(ks.iter().map(|k| k.abbrev().to_string()));
    let mut rows = Vec::new();
    for (label, dataset, slice) in rows_spec {
        let stat = |k: ClassifierKind| find(reports, k, *dataset).and_then(|r| r.slices.get(slice));
        let mut row = vec![label.clone()];
        if with_n {
            row.push(ks.iter().find_map(|k| stat(*k)).map_or(0, |s| s.n).to_string());
        }
        row.extend(
            ks.iter()
                .map(|k| stat(*k).map_or_else(|| "-".to_string(), |s| pct(s.accuracy))),
        );
        rows.push(row);
    }
    render_table(&headers, &rows)
}

fn subcorpus_rows(reports: &[AttackReport]) -> Vec<(String, DatasetId, String)> {
    let mut out = Vec::new();
    for (dataset, suffix) in [(DatasetId::Alice, ""), (DatasetId::AliceOod, " (ood)")] {
        let names: BTreeSet<&String> = reports
            .iter()
            .filter(|r| r.dataset == dataset)
            .flat_map(|r| r.slices.keys())
            .filter(|k| k.starts_with("subcorpus:"))
            .collect();
        for n in names {
            let label = format!("{}{suffix}", &n["subcorpus:".len()..]);
            out.push((label, dataset, n.clone()));
        }
    }
    out
}

/// Plain-text rendering of a sentence-level report file.
pub fn render_sentence(file: &SentenceReportFile) -> String {
    let r = &file.reports;
    let mut out = String::new();
    out.push_str("Attack accuracy (%) by probe set\n\n");
    out.push_str(&dataset_table(
        r,
        &[
            DatasetId::BobTrain,
            DatasetId::BobValid,
            DatasetId::BobTest,
            DatasetId::Alice,
        ],
    ));
    let sub = subcorpus_rows(r);
    if !sub.is_empty() {
        out.push_str("\nTarget probe accuracy (%) by subcorpus\n\n");
        out.push_str(&slice_table(r, &sub, false));
    }
    let oov: Vec<(String, DatasetId, String)> = ["oov_in_source", "oov_in_reference", "oov_in_both"]
        .iter()
        .map(|s| (s.to_string(), DatasetId::Alice, s.to_string()))
        .collect();
    if r.iter().any(|x| x.slices.keys().any(|k| k.starts_with("oov_"))) {
        out.push_str("\nTarget probe accuracy (%) on sentences with OOV words\n\n");
        out.push_str(&slice_table(r, &oov, true));
    }
    let alice: Vec<&AttackReport> = r.iter().filter(|x| x.dataset == DatasetId::Alice).collect();
    if !alice.is_empty() {
        out.push_str("\nTarget probe confusion matrices (rows: true in/out, columns: predicted in/out)\n\n");
        let headers: Vec<String> = ["classifier", "in->in", "in->out", "out->in", "out->out"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = alice
            .iter()
            .map(|x| {
                let c = x.confusion;
                vec![
                    x.classifier.abbrev().to_string(),
                    c.true_in().to_string(),
                    c.false_out().to_string(),
                    c.false_in().to_string(),
                    c.true_out().to_string(),
                ]
            })
            .collect();
        out.push_str(&render_table(&headers, &rows));
    }
    out
}

/// Plain-text rendering of a group report file.
pub fn render_group(file: &GroupReportFile) -> String {
    let reports: Vec<AttackReport> = file.results.iter().flat_map(|g| g.reports.iter().cloned()).collect();
    let mut out = format!(
        "Group attack accuracy (%), groups of {}, BLEU adjustment {:+.4}\n\n",
        file.group_size, file.delta_bleu
    );
    out.push_str(&dataset_table(
        &reports,
        &[
            DatasetId::BobTrain,
            DatasetId::BobValid,
            DatasetId::BobTest,
            DatasetId::Alice,
            DatasetId::AliceAdjusted,
        ],
    ));
    out.push_str("\nThreshold sweep maximum on adjusted target groups\n\n");
    let headers: Vec<String> = ["classifier", "best N", "accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = file
        .results
        .iter()
        .map(|g| {
            let best = g.sweep.argmax();
            let acc = best
                .and_then(|n| g.sweep.points.iter().find(|p| p.0 == n))
                .map_or_else(|| "-".to_string(), |p| pct(p.1));
            vec![
                g.classifier.abbrev().to_string(),
                best.map_or_else(|| "-".to_string(), |n| format!("{n}")),
                acc,
            ]
        })
        .collect();
    out.push_str(&render_table(&headers, &rows));
    let dropped: Vec<String> = file
        .results
        .first()
        .map(|g| {
            g.dropped
                .iter()
                .filter(|d| d.2 > 0)
                .map(|(d, l, n)| format!("{d}/{l}: {n}"))
                .collect()
        })
        .unwrap_or_default();
    if !dropped.is_empty() {
        let _ = writeln!(out, "\nRecords left out of evaluation groups: {}", dropped.join(", "));
    }
    out
}

/// `N,accuracy` with a header line.
pub fn sweep_csv(curve: &SweepCurve) -> String {
    let mut out = String::from("N,accuracy\n");
    for (n, acc) in &curve.points {
        let _ = writeln!(out, "{n},{acc}");
    }
    out
}

/// One row per probe: key, label when given, then the schema's columns.
/// Training dumps carry labels; prediction dumps do not.
pub fn feature_csv(
    schema: &FeatureSchema,
    keys: &[(String, u32)],
    labels: Option<&[Label]>,
    rows: &[Vec<f64>],
) -> String {
    let mut out = String::from("domain,index");
    if labels.is_some() {
        out.push_str(",label");
    }
    for c in &schema.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, ((domain, index), row)) in keys.iter().zip(rows).enumerate() {
        let _ = write!(out, "{domain},{index}");
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Per-domain set sizes after deduplication.
pub fn split_summary(splits: &CorpusSplits, stats: &CorpusStats, tier_of: impl Fn(&str) -> Option<Tier>) -> String {
    let count = |set: &[seqmia_core::corpus::SentencePair], d: &str| set.iter().filter(|p| p.domain.name == d).count();
    let mut headers: Vec<String> = ["domain", "tier", "pairs", "a_in", "a_out", "a_ood", "a_train", "b_all"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if splits.hold_spare_probe {
        headers.push("spare".into());
    }
    let mut totals = vec![0usize; headers.len() - 2];
    let mut rows = Vec::new();
    for (d, n) in &stats.per_domain {
        let mut counts = vec![
            *n,
            count(&splits.a_in, d),
            count(&splits.a_out, d),
            count(&splits.a_ood, d),
            count(&splits.a_train, d),
            count(&splits.b_all, d),
        ];
        if splits.hold_spare_probe {
            counts.push(count(&splits.spare, d));
        }
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
        let mut row = vec![d.clone(), tier_of(d).map_or("?", Tier::as_str).to_string()];
        row.extend(counts.iter().map(usize::to_string));
        rows.push(row);
    }
    let mut total = vec!["total".to_string(), String::new()];
    total.extend(totals.iter().map(usize::to_string));
    rows.push(total);
    let mut out = render_table(&headers, &rows);
    if stats.duplicates_removed > 0 {
        let _ = writeln!(out, "duplicates removed: {}", stats.duplicates_removed);
    }
    out
}
