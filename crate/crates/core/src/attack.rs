//! Shadow-model attack orchestration and evaluation.
//!
//! The flow mirrors the attacker's recipe: translate each shadow split's in-
//! and out-probes with that split's own oracle, train classifiers on the
//! attack-train splits, then score probe sets translated by the target.
//! Predictions are always computed from label-free features before any
//! label is looked at.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, Classifier, ClassifierKind, ClassifierSpec, Prediction, TrainedModel, TrainingSet};
use crate::corpus::{SentencePair, Vocabulary};
use crate::features::{
    adjust_group_features, partition_eval_groups, sample_training_groups, sentence_features_with, FeatureOptions,
    FeatureSchema, GroupFeatureVector, Label, ProbeRecord, SentenceScore,
};
use crate::metrics::{corpus_bleu, BleuScore};
use crate::splitter::{ShadowId, ShadowSplit, SplitRole};
use crate::translator::Oracle;
use crate::{Error, Result};

/// Which probe set a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    BobTrain,
    BobValid,
    BobTest,
    Alice,
    AliceAdjusted,
    AliceOod,
}

impl DatasetId {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::BobTrain => "bob_train",
            DatasetId::BobValid => "bob_valid",
            DatasetId::BobTest => "bob_test",
            DatasetId::Alice => "alice",
            DatasetId::AliceAdjusted => "alice_adjusted",
            DatasetId::AliceOod => "alice_ood",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 2x2 counts, rows true in/out, columns predicted in/out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    fn idx(l: Label) -> usize {
        match l {
            Label::In => 0,
            Label::Out => 1,
        }
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.0[Self::idx(truth)][Self::idx(predicted)] += 1;
    }

    pub fn true_in(&self) -> u64 {
        self.0[0][0]
    }
    pub fn false_out(&self) -> u64 {
        self.0[0][1]
    }
    pub fn false_in(&self) -> u64 {
        self.0[1][0]
    }
    pub fn true_out(&self) -> u64 {
        self.0[1][1]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// `(TP + TN) / total`, 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (self.true_in() + self.true_out()) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceStat {
    pub accuracy: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub classifier: ClassifierKind,
    pub dataset: DatasetId,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n: u64,
    /// `subcorpus:<name>` slices partition the probe; `oov_*` slices may
    /// overlap.
    pub slices: BTreeMap<String, SliceStat>,
}

/// Features for a probe set, in record order. Reads pairs and translations
/// only.
pub fn probe_features(records: &[ProbeRecord], options: &FeatureOptions) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| sentence_features_with(r, options).map(|f| f.to_row()))
        .collect()
}

/// Joins predictions with labels. `slice_keys[i]` lists the slices record
/// `i` belongs to.
pub fn score_predictions(
    classifier: ClassifierKind,
    dataset: DatasetId,
    predictions: &[Prediction],
    labels: &[Label],
    slice_keys: &[Vec<String>],
) -> AttackReport {
    let mut confusion = Confusion::default();
    let mut slices: BTreeMap<String, Confusion> = BTreeMap::new();
    for (i, (p, l)) in predictions.iter().zip(labels).enumerate() {
        confusion.add(*l, p.label);
        if let Some(keys) = slice_keys.get(i) {
            for k in keys {
                slices.entry(k.clone()).or_default().add(*l, p.label);
            }
        }
    }
    AttackReport {
        classifier,
        dataset,
        accuracy: confusion.accuracy(),
        confusion,
        n: confusion.total(),
        slices: slices
            .into_iter()
            .map(|(k, c)| {
                (
                    k,
                    SliceStat {
                        accuracy: c.accuracy(),
                        n: c.total(),
                    },
                )
            })
            .collect(),
    }
}

fn slice_keys(r: &ProbeRecord) -> Vec<String> {
    let mut keys = alloc::vec![format!("subcorpus:{}", r.subcorpus())];
    if let Some(oov) = r.oov {
        for (flag, name) in [
            (oov.oov_in_source, "oov_in_source"),
            (oov.oov_in_reference, "oov_in_reference"),
            (oov.oov_in_both, "oov_in_both"),
        ] {
            if flag {
                keys.push(name.to_string());
            }
        }
    }
    keys
}

/// Scores every probe, then compares with the gold labels.
pub fn evaluate(
    model: &dyn Classifier,
    kind: ClassifierKind,
    dataset: DatasetId,
    probe: &[ProbeRecord],
    options: &FeatureOptions,
) -> Result<AttackReport> {
    let rows = probe_features(probe, options)?;
    let predictions = model.predict_batch(&options.schema(), &rows)?;
    let labels: Vec<Label> = probe.iter().map(|r| r.label).collect();
    let keys: Vec<Vec<String>> = probe.iter().map(slice_keys).collect();
    Ok(score_predictions(kind, dataset, &predictions, &labels, &keys))
}

/// Sets OOV flags against the attacker's vocabularies.
pub fn tag_oov(records: &mut [ProbeRecord], src_vocab: &Vocabulary, ref_vocab: &Vocabulary) {
    for r in records {
        r.oov = Some(crate::corpus::oov_flags(&r.pair, src_vocab, ref_vocab));
    }
}

/// Translates an in-probe and an out-probe with a single batch call (one
/// oracle call per pair) and attaches the labels afterwards.
pub fn translate_probes<O: Oracle + ?Sized>(
    oracle: &mut O,
    in_pairs: &[SentencePair],
    out_pairs: &[SentencePair],
) -> Result<Vec<ProbeRecord>> {
    let mut pairs = Vec::with_capacity(in_pairs.len() + out_pairs.len());
    pairs.extend_from_slice(in_pairs);
    pairs.extend_from_slice(out_pairs);
    let translations = oracle.translate_batch(&pairs)?;
    if translations.len() != pairs.len() {
        return Err(Error::Oracle(format!(
            "oracle {} returned {} translations for {} pairs",
            oracle.id(),
            translations.len(),
            pairs.len()
        )));
    }
    Ok(pairs
        .into_iter()
        .zip(translations)
        .enumerate()
        .map(|(i, (p, t))| {
            let label = if i < in_pairs.len() { Label::In } else { Label::Out };
            ProbeRecord::new(p, t, label)
        })
        .collect())
}

/// Translated probes of one shadow split.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowRecords {
    pub id: ShadowId,
    pub role: SplitRole,
    pub records: Vec<ProbeRecord>,
}

/// Translates every split's `b_in`/`b_out` with the oracle built for that
/// split (whose training data is the split's `b_train`).
pub fn translate_shadow_probes<O, F>(splits: &[ShadowSplit], mut oracle_for: F) -> Result<Vec<ShadowRecords>>
where
    O: Oracle,
    F: FnMut(&ShadowSplit) -> Result<O>,
{
    splits
        .iter()
        .map(|s| {
            let mut oracle = oracle_for(s)?;
            Ok(ShadowRecords {
                id: s.id,
                role: s.role,
                records: translate_probes(&mut oracle, &s.b_in, &s.b_out)?,
            })
        })
        .collect()
}

pub fn records_for_role(shadow: &[ShadowRecords], role: SplitRole) -> Vec<ProbeRecord> {
    shadow
        .iter()
        .filter(|s| s.role == role)
        .flat_map(|s| s.records.iter().cloned())
        .collect()
}

struct LabelledRows {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

fn labelled(records: &[ProbeRecord], options: &FeatureOptions) -> Result<LabelledRows> {
    Ok(LabelledRows {
        rows: probe_features(records, options)?,
        labels: records.iter().map(|r| r.label).collect(),
    })
}

/// Trains one model per spec on the attack-train splits; the validation
/// splits feed early stopping.
pub fn build_attack_classifier(
    shadow: &[ShadowRecords],
    specs: &[ClassifierSpec],
    options: &FeatureOptions,
) -> Result<Vec<TrainedModel>> {
    let schema = options.schema();
    let train = labelled(&records_for_role(shadow, SplitRole::AttackTrain), options)?;
    if train.rows.is_empty() {
        return Err(Error::invalid("no attack-train shadow splits"));
    }
    let valid = labelled(&records_for_role(shadow, SplitRole::AttackValidation), options)?;
    let train_set = TrainingSet::new(&schema, &train.rows, &train.labels);
    let valid_set = TrainingSet::new(&schema, &valid.rows, &valid.labels);
    specs
        .iter()
        .map(|spec| {
            classifiers::train(
                spec,
                &train_set,
                if valid.rows.is_empty() { None } else { Some(&valid_set) },
            )
        })
        .collect()
}

/// Target-side probe sets for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetProbes {
    /// In- and out-probes, translated by the target.
    pub balanced: Vec<ProbeRecord>,
    /// OOD probe, all labelled out.
    pub ood: Vec<ProbeRecord>,
}

/// Reports for Bob's train/valid/test splits and the target probes, one
/// list per model.
pub fn evaluate_sentence_attack(
    models: &[TrainedModel],
    shadow: &[ShadowRecords],
    target: &TargetProbes,
    options: &FeatureOptions,
) -> Result<Vec<Vec<AttackReport>>> {
    let sets = [
        (DatasetId::BobTrain, records_for_role(shadow, SplitRole::AttackTrain)),
        (
            DatasetId::BobValid,
            records_for_role(shadow, SplitRole::AttackValidation),
        ),
        (DatasetId::BobTest, records_for_role(shadow, SplitRole::AttackTest)),
    ];
    models
        .iter()
        .map(|m| {
            let mut reports = Vec::new();
            for (id, records) in &sets {
                if !records.is_empty() {
                    reports.push(evaluate(m, m.kind(), *id, records, options)?);
                }
            }
            if !target.balanced.is_empty() {
                reports.push(evaluate(m, m.kind(), DatasetId::Alice, &target.balanced, options)?);
            }
            if !target.ood.is_empty() {
                reports.push(evaluate(m, m.kind(), DatasetId::AliceOod, &target.ood, options)?);
            }
            Ok(reports)
        })
        .collect()
}

/// Accuracy as a function of the share of top-scored items labelled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    /// `(in percentage, accuracy)` for N = 0, step, ..., 100.
    pub points: Vec<(f64, f64)>,
}

impl SweepCurve {
    /// First N attaining the maximum accuracy.
    pub fn argmax(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for &(n, acc) in &self.points {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((n, acc));
            }
        }
        best.map(|(n, _)| n)
    }
}

/// Ranks items by score (descending, ties by input order) and labels the top
/// `round(N% * n)` as in, for N on a grid of `step_percent`.
pub fn threshold_sweep(scores: &[f64], labels: &[Label], step_percent: u32) -> Result<SweepCurve> {
    if step_percent == 0 || 100 % step_percent != 0 {
        return Err(Error::invalid(format!("sweep step {step_percent} must divide 100")));
    }
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid(
            "sweep needs equally many scores and labels, at least one",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let n = scores.len() as u64;
    let total_out = labels.iter().filter(|l| **l == Label::Out).count() as u64;
    let mut points = Vec::new();
    for pct in (0..=100).step_by(step_percent as usize) {
        let n_in = (pct as u64 * n + 50) / 100;
        let top_in = order[..n_in as usize]
            .iter()
            .filter(|&&i| labels[i] == Label::In)
            .count() as u64;
        let top_out = n_in - top_in;
        let correct = top_in + (total_out - top_out);
        points.push((f64::from(pct), correct as f64 / n as f64));
    }
    Ok(SweepCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOptions {
    pub group_size: usize,
    pub n_groups: usize,
    /// Target held-out BLEU minus shadow held-out BLEU, applied to the
    /// target's group features.
    pub delta_bleu: f64,
    pub sweep_step: u32,
    pub seed: u64,
}

impl Default for GroupOptions {
    fn default() -> Self {
        GroupOptions {
            group_size: 500,
            n_groups: 6000,
            delta_bleu: 0.0,
            sweep_step: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAttackResult {
    pub classifier: ClassifierKind,
    pub reports: Vec<AttackReport>,
    /// Sweep over the (adjusted) target groups.
    pub sweep: SweepCurve,
    pub dropped: Vec<(DatasetId, Label, usize)>,
}

fn scores_of(records: &[ProbeRecord]) -> Vec<(SentenceScore, Label)> {
    records.iter().map(|r| (SentenceScore::of(r), r.label)).collect()
}

fn group_rows(groups: &[(GroupFeatureVector, Label)]) -> (Vec<Vec<f64>>, Vec<Label>) {
    groups.iter().map(|(g, l)| (g.to_row(), *l)).unzip()
}

fn group_report(
    model: &TrainedModel,
    dataset: DatasetId,
    groups: &[(GroupFeatureVector, Label)],
) -> Result<(AttackReport, Vec<Prediction>)> {
    let (rows, labels) = group_rows(groups);
    let predictions = model.predict_batch(&FeatureSchema::group(), &rows)?;
    Ok((
        score_predictions(model.kind(), dataset, &predictions, &labels, &[]),
        predictions,
    ))
}

/// Group-probe attack: trains on groups sampled from Bob's attack-train
/// records, evaluates on contiguous groups of his validation/test records
/// and of the target probe (original and delta-adjusted), and sweeps the
/// in-threshold over the adjusted target groups.
pub fn group_attack(
    shadow: &[ShadowRecords],
    target: &[ProbeRecord],
    specs: &[ClassifierSpec],
    options: &GroupOptions,
) -> Result<Vec<GroupAttackResult>> {
    let train_scores = scores_of(&records_for_role(shadow, SplitRole::AttackTrain));
    let pick = |want: Label| -> Vec<SentenceScore> {
        train_scores
            .iter()
            .filter(|(_, l)| *l == want)
            .map(|(s, _)| *s)
            .collect()
    };
    let (ins, outs) = (pick(Label::In), pick(Label::Out));
    let train_groups = sample_training_groups(&ins, &outs, options.group_size, options.n_groups, options.seed)?;

    let mut dropped = Vec::new();
    let mut eval_sets: Vec<(DatasetId, Vec<(GroupFeatureVector, Label)>)> = Vec::new();
    for (id, role) in [
        (DatasetId::BobValid, SplitRole::AttackValidation),
        (DatasetId::BobTest, SplitRole::AttackTest),
    ] {
        let recs = records_for_role(shadow, role);
        if recs.is_empty() {
            continue;
        }
        let eg = partition_eval_groups(&scores_of(&recs), options.group_size)?;
        dropped.extend(eg.dropped.iter().map(|(l, n)| (id, *l, *n)));
        eval_sets.push((id, eg.groups));
    }
    let alice = partition_eval_groups(&scores_of(target), options.group_size)?;
    dropped.extend(alice.dropped.iter().map(|(l, n)| (DatasetId::Alice, *l, *n)));
    let adjusted: Vec<(GroupFeatureVector, Label)> = alice
        .groups
        .iter()
        .map(|(g, l)| adjust_group_features(g, options.delta_bleu).map(|a| (a, *l)))
        .collect::<Result<_>>()?;
    if alice.groups.is_empty() {
        return Err(Error::Sizing {
            domain: "target probe groups".to_string(),
            required: options.group_size,
            available: target.len(),
        });
    }
    eval_sets.push((DatasetId::Alice, alice.groups));
    eval_sets.push((DatasetId::AliceAdjusted, adjusted));

    let schema = FeatureSchema::group();
    let (train_rows, train_labels) = group_rows(&train_groups);
    let train_set = TrainingSet::new(&schema, &train_rows, &train_labels);

    specs
        .iter()
        .map(|spec| {
            let model = classifiers::train(spec, &train_set, None)?;
            let mut reports = Vec::new();
            let (r, _) = group_report(&model, DatasetId::BobTrain, &train_groups)?;
            reports.push(r);
            let mut sweep = None;
            for (id, groups) in &eval_sets {
                let (r, predictions) = group_report(&model, *id, groups)?;
                if *id == DatasetId::AliceAdjusted {
                    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
                    let labels: Vec<Label> = groups.iter().map(|(_, l)| *l).collect();
                    sweep = Some(threshold_sweep(&scores, &labels, options.sweep_step)?);
                }
                reports.push(r);
            }
            Ok(GroupAttackResult {
                classifier: model.kind(),
                reports,
                sweep: sweep.unwrap_or(SweepCurve { points: Vec::new() }),
                dropped: dropped.clone(),
            })
        })
        .collect()
}

/// Corpus BLEU of an oracle's translations of `heldout`.
pub fn oracle_bleu<O: Oracle + ?Sized>(oracle: &mut O, heldout: &[SentencePair]) -> Result<BleuScore> {
    let t = oracle.translate_batch(heldout)?;
    corpus_bleu(
        t.iter()
            .zip(heldout)
            .map(|(t, p)| (t.hypothesis.as_slice(), p.reference.as_slice())),
    )
}

/// Target held-out BLEU minus the mean held-out BLEU of the shadow oracles.
pub fn measure_bleu_gap<T, S>(target: &mut T, shadows: &mut [S], heldout: &[SentencePair]) -> Result<f64>
where
    T: Oracle + ?Sized,
    S: Oracle,
{
    if shadows.is_empty() {
        return Err(Error::invalid("BLEU gap needs at least one shadow oracle"));
    }
    let t = oracle_bleu(target, heldout)?.value();
    let mut sum = 0.0;
    for s in shadows.iter_mut() {
        sum += oracle_bleu(s, heldout)?.value();
    }
    Ok(t - sum / shadows.len() as f64)
}

/// Target held-out BLEU minus a known shadow BLEU.
pub fn bleu_gap_from_value<T: Oracle + ?Sized>(
    target: &mut T,
    shadow_bleu: f64,
    heldout: &[SentencePair],
) -> Result<f64> {
    Ok(oracle_bleu(target, heldout)?.value() - shadow_bleu)
}

/// Convenience for callers that hold boxed oracles.
pub type DynOracle = Box<dyn Oracle>;
