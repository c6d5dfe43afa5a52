//! Attack features: per-sentence n-gram precisions and BLEU, and per-group
//! BLEU histograms with pooled corpus BLEU.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{OovFlags, SentencePair};
use crate::metrics::{SegmentStats, MAX_ORDER};
use crate::rng;
use crate::translator::Translation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    In,
    Out,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::In => "in",
            Label::Out => "out",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "in" => Some(Label::In),
            "out" => Some(Label::Out),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A probe joined with its translation and gold membership label. The label
/// never reaches a classifier: feature extraction only reads the pair and
/// the translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub pair: SentencePair,
    pub translation: Translation,
    pub label: Label,
    pub oov: Option<OovFlags>,
    #[serde(default)]
    pub external_scores: BTreeMap<String, f64>,
}

impl ProbeRecord {
    pub fn new(pair: SentencePair, translation: Translation, label: Label) -> Self {
        ProbeRecord {
            pair,
            translation,
            label,
            oov: None,
            external_scores: BTreeMap::new(),
        }
    }

    pub fn subcorpus(&self) -> &str {
        &self.pair.domain.name
    }
}

/// Which optional columns a sentence-level feature row carries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub include_model_score: bool,
    /// Names of externally supplied scores, in column order.
    #[serde(default)]
    pub external_scores: Vec<String>,
}

impl FeatureOptions {
    pub fn schema(&self) -> FeatureSchema {
        let mut columns: Vec<String> = ["p1", "p2", "p3", "p4", "sbleu"]
            .iter()
            .map(|c| c.to_string())
            .collect();
        if self.include_model_score {
            columns.push("model_score".to_string());
        }
        columns.extend(self.external_scores.iter().map(|n| format!("ext:{n}")));
        FeatureSchema { columns }
    }
}

/// Ordered feature column names. Stored with every trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    pub columns: Vec<String>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `Err` naming missing and extra columns if `other` differs.
    pub fn check(&self, other: &FeatureSchema) -> Result<()> {
        if self == other {
            return Ok(());
        }
        let missing = self
            .columns
            .iter()
            .filter(|c| !other.columns.contains(c))
            .cloned()
            .collect();
        let extra = other
            .columns
            .iter()
            .filter(|c| !self.columns.contains(c))
            .cloned()
            .collect();
        Err(Error::SchemaMismatch { missing, extra })
    }

    pub fn group() -> FeatureSchema {
        let mut columns: Vec<String> = (0..HIST_BINS).map(|b| format!("bin{b:03}")).collect();
        columns.push("corpus_bleu".to_string());
        FeatureSchema { columns }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Modified 1..4-gram precisions.
    pub precisions: [f64; MAX_ORDER],
    pub sbleu: f64,
    pub model_score: Option<f64>,
    pub external_scores: Vec<(String, f64)>,
}

impl FeatureVector {
    /// Values in schema order.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row: Vec<f64> = self.precisions.to_vec();
        row.push(self.sbleu);
        row.extend(self.model_score);
        row.extend(self.external_scores.iter().map(|(_, v)| *v));
        row
    }
}

pub fn sentence_features(record: &ProbeRecord, include_model_score: bool) -> Result<FeatureVector> {
    sentence_features_with(
        record,
        &FeatureOptions {
            include_model_score,
            external_scores: Vec::new(),
        },
    )
}

pub fn sentence_features_with(record: &ProbeRecord, options: &FeatureOptions) -> Result<FeatureVector> {
    let stats = SegmentStats::compute(&record.translation.hypothesis, &record.pair.reference);
    let mut precisions = [0.0; MAX_ORDER];
    for (p, s) in precisions.iter_mut().zip(stats.precisions.iter()) {
        *p = s.ratio();
    }
    let model_score = if options.include_model_score {
        match record.translation.model_score {
            Some(s) => Some(s),
            None => {
                return Err(Error::Config(format!(
                    "model score requested but oracle {} gave none for {}",
                    record.translation.origin,
                    record.pair.key()
                )))
            }
        }
    } else {
        None
    };
    let mut external_scores = Vec::with_capacity(options.external_scores.len());
    for name in &options.external_scores {
        let Some(v) = record.external_scores.get(name) else {
            return Err(Error::Config(format!(
                "external score {name} missing for {}",
                record.pair.key()
            )));
        };
        external_scores.push((name.clone(), *v));
    }
    Ok(FeatureVector {
        precisions,
        sbleu: stats.sentence_bleu().value(),
        model_score,
        external_scores,
    })
}

/// 0.00..0.99 in steps of 0.01 plus a closed bin for exactly 1.0.
pub const HIST_BINS: usize = 101;

/// Histogram bin of a sentence BLEU value. A 1e-9 tolerance keeps values
/// like `0.29` (stored as 0.28999...) in their decimal bin.
pub fn bleu_bin(sbleu: f64) -> usize {
    let b = libm::floor(sbleu.clamp(0.0, 1.0) * 100.0 + 1e-9);
    (b as usize).min(HIST_BINS - 1)
}

/// Per-sentence quantities a group needs: smoothed BLEU for binning and raw
/// counts for pooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sbleu: f64,
    pub stats: SegmentStats,
}

impl SentenceScore {
    pub fn of(record: &ProbeRecord) -> Self {
        let stats = SegmentStats::compute(&record.translation.hypothesis, &record.pair.reference);
        SentenceScore {
            sbleu: stats.sentence_bleu().value(),
            stats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFeatureVector {
    /// Fraction of the group's sentences per BLEU bin.
    pub hist: Vec<f64>,
    pub corpus_bleu: f64,
    pub group_size: usize,
    /// The (possibly shifted) sentence BLEU values the histogram was binned
    /// from. Needed to re-bin under an adjustment; not a feature.
    #[serde(skip)]
    pub sentence_bleu: Vec<f64>,
}

impl GroupFeatureVector {
    fn build(sentence_bleu: Vec<f64>, corpus_bleu: f64) -> Self {
        let n = sentence_bleu.len();
        let mut counts = [0usize; HIST_BINS];
        for &s in &sentence_bleu {
            counts[bleu_bin(s)] += 1;
        }
        GroupFeatureVector {
            hist: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            corpus_bleu,
            group_size: n,
            sentence_bleu,
        }
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = self.hist.clone();
        row.push(self.corpus_bleu);
        row
    }
}

/// Group features of scored sentences.
pub fn group_features_scored(members: &[&SentenceScore]) -> Result<GroupFeatureVector> {
    if members.is_empty() {
        return Err(Error::invalid("a probe group needs at least one sentence"));
    }
    let mut pooled = SegmentStats::default();
    for m in members {
        pooled.add(&m.stats);
    }
    Ok(GroupFeatureVector::build(
        members.iter().map(|m| m.sbleu).collect(),
        pooled.corpus_bleu().value(),
    ))
}

pub fn group_features(records: &[ProbeRecord]) -> Result<GroupFeatureVector> {
    let scores: Vec<SentenceScore> = records.iter().map(SentenceScore::of).collect();
    let refs: Vec<&SentenceScore> = scores.iter().collect();
    group_features_scored(&refs)
}

/// Shifts every sentence BLEU and the corpus BLEU down by `delta_bleu`
/// (clamped to `[0, 1]`) and re-bins. `delta_bleu` is the target's held-out
/// BLEU minus the shadow models' held-out BLEU.
pub fn adjust_group_features(v: &GroupFeatureVector, delta_bleu: f64) -> Result<GroupFeatureVector> {
    if v.sentence_bleu.len() != v.group_size {
        return Err(Error::invalid(
            "group vector has no sentence scores to re-bin; adjust before serializing",
        ));
    }
    if delta_bleu == 0.0 {
        return Ok(v.clone());
    }
    let shifted = v
        .sentence_bleu
        .iter()
        .map(|s| (s - delta_bleu).clamp(0.0, 1.0))
        .collect();
    Ok(GroupFeatureVector::build(
        shifted,
        (v.corpus_bleu - delta_bleu).clamp(0.0, 1.0),
    ))
}

/// Draws `n_groups` label-homogeneous groups, alternating in and out. Each
/// group is sampled without replacement; groups are independent of each
/// other.
pub fn sample_training_groups(
    in_scores: &[SentenceScore],
    out_scores: &[SentenceScore],
    group_size: usize,
    n_groups: usize,
    seed: u64,
) -> Result<Vec<(GroupFeatureVector, Label)>> {
    if group_size == 0 {
        return Err(Error::invalid("group size must be positive"));
    }
    for (label, pool) in [(Label::In, in_scores), (Label::Out, out_scores)] {
        if pool.len() < group_size {
            return Err(Error::Sizing {
                domain: format!("{label}-labelled training records"),
                required: group_size,
                available: pool.len(),
            });
        }
    }
    let mut r = rng::stream(seed, "features/group-sample", &[]);
    let mut out = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let (label, pool) = if g % 2 == 0 {
            (Label::In, in_scores)
        } else {
            (Label::Out, out_scores)
        };
        let picks = rand::seq::index::sample(&mut r, pool.len(), group_size);
        let members: Vec<&SentenceScore> = picks.iter().map(|i| &pool[i]).collect();
        out.push((group_features_scored(&members)?, label));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGroups {
    pub groups: Vec<(GroupFeatureVector, Label)>,
    /// Records per label left over after chunking.
    pub dropped: Vec<(Label, usize)>,
}

/// Splits labelled scores into contiguous groups of `group_size`, in-groups
/// first, each label in input order. Remainders are dropped and reported.
pub fn partition_eval_groups(scores: &[(SentenceScore, Label)], group_size: usize) -> Result<EvalGroups> {
    if group_size == 0 {
        return Err(Error::invalid("group size must be positive"));
    }
    let mut groups = Vec::new();
    let mut dropped = Vec::new();
    for label in [Label::In, Label::Out] {
        let mine: Vec<&SentenceScore> = scores.iter().filter(|(_, l)| *l == label).map(|(s, _)| s).collect();
        let mut chunks = mine.chunks_exact(group_size);
        for chunk in &mut chunks {
            groups.push((group_features_scored(chunk)?, label));
        }
        if !chunks.remainder().is_empty() {
            dropped.push((label, chunks.remainder().len()));
        }
    }
    Ok(EvalGroups { groups, dropped })
}
