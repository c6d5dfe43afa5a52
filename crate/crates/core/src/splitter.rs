//! Probe and training-set construction.
//!
//! [`make_carol_splits`] builds the target's training data, the in/out probes
//! and the OOD probe from a deduplicated corpus. [`make_shadow_splits`] cuts
//! the attacker's data into the signed groups used to train shadow models.
//! Selection is positional over a seeded per-domain shuffle, and the
//! resulting manifests list every member by `(domain, index)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{PairKey, SentencePair, Tier};
use crate::{rng, Error, Result};

pub const DEFAULT_K: usize = 5_000;
pub const DEFAULT_SHADOW_GROUPS: usize = 5;
pub const SPLIT_MANIFEST_FORMAT: &str = "seqmia-split-manifest/v1";
pub const SHADOW_MANIFEST_FORMAT: &str = "seqmia-shadow-manifest/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplits {
    pub seed: u64,
    pub k: usize,
    pub hold_spare_probe: bool,
    pub a_in: Vec<SentencePair>,
    pub a_out: Vec<SentencePair>,
    pub a_ood: Vec<SentencePair>,
    pub a_train: Vec<SentencePair>,
    pub b_all: Vec<SentencePair>,
    /// Second in-probe kept aside when `hold_spare_probe` is set.
    pub spare: Vec<SentencePair>,
}

/// Exact membership of every set, enough to rebuild them from the canonical
/// corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub format: String,
    pub seed: u64,
    pub k: usize,
    pub hold_spare_probe: bool,
    pub sets: BTreeMap<String, Vec<PairKey>>,
}

pub const SET_NAMES: [&str; 6] = ["a_in", "a_out", "a_ood", "a_train", "b_all", "spare"];

fn keys(pairs: &[SentencePair]) -> Vec<PairKey> {
    pairs.iter().map(SentencePair::key).collect()
}

impl CorpusSplits {
    pub fn set(&self, name: &str) -> Option<&[SentencePair]> {
        Some(match name {
            "a_in" => &self.a_in,
            "a_out" => &self.a_out,
            "a_ood" => &self.a_ood,
            "a_train" => &self.a_train,
            "b_all" => &self.b_all,
            "spare" => &self.spare,
            _ => return None,
        })
    }

    pub fn manifest(&self) -> SplitManifest {
        let sets = SET_NAMES
            .iter()
            .map(|n| (n.to_string(), keys(self.set(n).unwrap_or_default())))
            .collect();
        SplitManifest {
            format: SPLIT_MANIFEST_FORMAT.to_string(),
            seed: self.seed,
            k: self.k,
            hold_spare_probe: self.hold_spare_probe,
            sets,
        }
    }

    /// Rebuilds the sets from a manifest and the corpus it was made from.
    pub fn from_manifest(manifest: &SplitManifest, corpus: &[SentencePair]) -> Result<Self> {
        if manifest.format != SPLIT_MANIFEST_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported split manifest format {:?}",
                manifest.format
            )));
        }
        let by_key: BTreeMap<PairKey, &SentencePair> = corpus.iter().map(|p| (p.key(), p)).collect();
        let lookup = |name: &str| -> Result<Vec<SentencePair>> {
            let Some(list) = manifest.sets.get(name) else {
                return Ok(Vec::new());
            };
            let mut missing = Vec::new();
            let mut out = Vec::with_capacity(list.len());
            for key in list {
                match by_key.get(key) {
                    Some(p) => out.push((*p).clone()),
                    None => missing.push(key.to_string()),
                }
            }
            if missing.is_empty() {
                Ok(out)
            } else {
                Err(Error::invalid(format!(
                    "manifest set {name} references {} pairs absent from the corpus, first {}",
                    missing.len(),
                    missing[0]
                )))
            }
        };
        Ok(CorpusSplits {
            seed: manifest.seed,
            k: manifest.k,
            hold_spare_probe: manifest.hold_spare_probe,
            a_in: lookup("a_in")?,
            a_out: lookup("a_out")?,
            a_ood: lookup("a_ood")?,
            a_train: lookup("a_train")?,
            b_all: lookup("b_all")?,
            spare: lookup("spare")?,
        })
    }
}

/// Groups pairs by domain name, keeping each domain's input order.
pub fn by_domain(pairs: &[SentencePair]) -> BTreeMap<String, Vec<SentencePair>> {
    let mut out: BTreeMap<String, Vec<SentencePair>> = BTreeMap::new();
    for p in pairs {
        out.entry(p.domain.name.clone()).or_default().push(p.clone());
    }
    out
}

fn shuffled(mut pairs: Vec<SentencePair>, seed: u64, purpose: &str, domain: &str) -> Vec<SentencePair> {
    let mut r = rng::stream(seed, purpose, &[domain.as_bytes()]);
    pairs.shuffle(&mut r);
    pairs
}

pub fn make_carol_splits(corpus: &[SentencePair], k: usize, hold_spare_probe: bool, seed: u64) -> Result<CorpusSplits> {
    if k == 0 {
        return Err(Error::invalid("probe size k must be positive"));
    }
    let mut splits = CorpusSplits {
        seed,
        k,
        hold_spare_probe,
        a_in: Vec::new(),
        a_out: Vec::new(),
        a_ood: Vec::new(),
        a_train: Vec::new(),
        b_all: Vec::new(),
        spare: Vec::new(),
    };
    let domains = by_domain(corpus);
    // size checks first, so no partial result escapes
    for (name, pairs) in &domains {
        let tier = pairs[0].domain.tier;
        let required = match tier {
            Tier::Ood => k,
            _ if hold_spare_probe => 3 * k + 1,
            _ => 2 * k + 1,
        };
        if pairs.len() < required {
            return Err(Error::Sizing {
                domain: name.clone(),
                required,
                available: pairs.len(),
            });
        }
    }
    for (name, pairs) in domains {
        let tier = pairs[0].domain.tier;
        let pairs = shuffled(pairs, seed, "split/carol", &name);
        if tier == Tier::Ood {
            splits.a_ood.extend(pairs.into_iter().take(k));
            continue;
        }
        let probe_end = if hold_spare_probe { 3 * k } else { 2 * k };
        splits.a_out.extend_from_slice(&pairs[..k]);
        splits.a_in.extend_from_slice(&pairs[k..2 * k]);
        splits.spare.extend_from_slice(&pairs[2 * k..probe_end]);
        splits.a_train.extend_from_slice(&pairs[k..]);
        if tier == Tier::Shared {
            splits.b_all.extend_from_slice(&pairs[probe_end..]);
        }
    }
    Ok(splits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShadowId {
    pub group: u32,
    pub polarity: Polarity,
}

impl fmt::Display for ShadowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.polarity {
            Polarity::Plus => '+',
            Polarity::Minus => '-',
        };
        write!(f, "{}{}", self.group, sign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    AttackTrain,
    AttackValidation,
    AttackTest,
}

/// Role of shadow group `group` (1-based) out of `groups`. With five groups:
/// 1-3 train, 4 validation, 5 test. In general the last two groups are
/// validation and test once there are at least three.
pub fn role_for(group: u32, groups: u32) -> SplitRole {
    if groups >= 3 && group == groups {
        SplitRole::AttackTest
    } else if groups >= 3 && group == groups - 1 {
        SplitRole::AttackValidation
    } else {
        SplitRole::AttackTrain
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowSplit {
    pub id: ShadowId,
    pub role: SplitRole,
    pub b_in: Vec<SentencePair>,
    pub b_out: Vec<SentencePair>,
    pub b_train: Vec<SentencePair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowManifest {
    pub format: String,
    pub seed: u64,
    pub groups: u32,
    pub k_prime: usize,
    pub splits: Vec<ShadowManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowManifestEntry {
    pub id: ShadowId,
    pub role: SplitRole,
    pub b_in: Vec<PairKey>,
    pub b_out: Vec<PairKey>,
}

pub fn make_shadow_splits(
    b_all: &[SentencePair],
    groups: usize,
    k_prime: usize,
    seed: u64,
) -> Result<Vec<ShadowSplit>> {
    if groups == 0 || k_prime == 0 {
        return Err(Error::invalid("shadow groups and k' must be positive"));
    }
    let n_sets = 2 * groups;
    let domains = by_domain(b_all);
    if domains.is_empty() {
        return Err(Error::invalid("attacker data B_all is empty"));
    }
    for (name, pairs) in &domains {
        if pairs.len() < n_sets * k_prime {
            return Err(Error::Sizing {
                domain: name.clone(),
                required: n_sets * k_prime,
                available: pairs.len(),
            });
        }
    }
    // sets[j] collects block j of every domain
    let mut sets: Vec<Vec<SentencePair>> = (0..n_sets).map(|_| Vec::new()).collect();
    for (name, pairs) in domains {
        let pairs = shuffled(pairs, seed, "split/shadow", &name);
        for (j, set) in sets.iter_mut().enumerate() {
            set.extend_from_slice(&pairs[j * k_prime..(j + 1) * k_prime]);
        }
    }
    // never-probed pairs, in B_all order
    let probed: BTreeSet<PairKey> = sets.iter().flatten().map(SentencePair::key).collect();
    let rest: Vec<SentencePair> = b_all.iter().filter(|p| !probed.contains(&p.key())).cloned().collect();
    let mut out = Vec::with_capacity(n_sets);
    for g in 0..groups {
        let first = &sets[2 * g];
        let second = &sets[2 * g + 1];
        for (polarity, b_in, b_out) in [(Polarity::Plus, first, second), (Polarity::Minus, second, first)] {
            let mut b_train = rest.clone();
            b_train.extend_from_slice(b_in);
            out.push(ShadowSplit {
                id: ShadowId {
                    group: g as u32 + 1,
                    polarity,
                },
                role: role_for(g as u32 + 1, groups as u32),
                b_in: b_in.clone(),
                b_out: b_out.clone(),
                b_train,
            });
        }
    }
    Ok(out)
}

pub fn shadow_manifest(splits: &[ShadowSplit], groups: usize, k_prime: usize, seed: u64) -> ShadowManifest {
    ShadowManifest {
        format: SHADOW_MANIFEST_FORMAT.to_string(),
        seed,
        groups: groups as u32,
        k_prime,
        splits: splits
            .iter()
            .map(|s| ShadowManifestEntry {
                id: s.id,
                role: s.role,
                b_in: keys(&s.b_in),
                b_out: keys(&s.b_out),
            })
            .collect(),
    }
}

/// Rebuilds shadow splits from their manifest: `b_train` is `b_all` minus
/// every probe set, plus the split's own in-probe.
pub fn shadow_splits_from_manifest(manifest: &ShadowManifest, b_all: &[SentencePair]) -> Result<Vec<ShadowSplit>> {
    if manifest.format != SHADOW_MANIFEST_FORMAT {
        return Err(Error::invalid(format!(
            "unsupported shadow manifest format {:?}",
            manifest.format
        )));
    }
    let by_key: BTreeMap<PairKey, &SentencePair> = b_all.iter().map(|p| (p.key(), p)).collect();
    let probed: BTreeSet<&PairKey> = manifest
        .splits
        .iter()
        .flat_map(|s| s.b_in.iter().chain(s.b_out.iter()))
        .collect();
    let rest: Vec<SentencePair> = b_all.iter().filter(|p| !probed.contains(&p.key())).cloned().collect();
    let resolve = |list: &[PairKey]| -> Result<Vec<SentencePair>> {
        list.iter()
            .map(|k| {
                by_key
                    .get(k)
                    .map(|p| (*p).clone())
                    .ok_or_else(|| Error::invalid(format!("shadow manifest key {k} not in B_all")))
            })
            .collect()
    };
    manifest
        .splits
        .iter()
        .map(|e| {
            let b_in = resolve(&e.b_in)?;
            let mut b_train = rest.clone();
            b_train.extend_from_slice(&b_in);
            Ok(ShadowSplit {
                id: e.id,
                role: e.role,
                b_in,
                b_out: resolve(&e.b_out)?,
                b_train,
            })
        })
        .collect()
}

/// One broken invariant. An empty list means the splits are valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub detail: String,
    pub pair: Option<PairKey>,
}

impl Violation {
    fn new(invariant: &str, detail: impl Into<String>, pair: Option<PairKey>) -> Self {
        Violation {
            invariant: invariant.to_string(),
            detail: detail.into(),
            pair,
        }
    }
}

fn key_set(pairs: &[SentencePair]) -> BTreeSet<PairKey> {
    pairs.iter().map(SentencePair::key).collect()
}

fn per_domain_counts(pairs: &[SentencePair]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for p in pairs {
        *m.entry(p.domain.name.as_str()).or_insert(0) += 1;
    }
    m
}

pub fn verify_splits(s: &CorpusSplits) -> Vec<Violation> {
    let mut v = Vec::new();
    let train = key_set(&s.a_train);
    let a_in = key_set(&s.a_in);
    let a_out = key_set(&s.a_out);
    let spare = key_set(&s.spare);

    for p in &s.a_out {
        if train.contains(&p.key()) {
            v.push(Violation::new(
                "a_out_disjoint_a_train",
                "out-probe pair is in A_train",
                Some(p.key()),
            ));
        }
    }
    for p in &s.a_in {
        if !train.contains(&p.key()) {
            v.push(Violation::new(
                "a_in_subset_a_train",
                "in-probe pair missing from A_train",
                Some(p.key()),
            ));
        }
        if a_out.contains(&p.key()) || spare.contains(&p.key()) {
            v.push(Violation::new(
                "probes_disjoint",
                "pair in more than one probe",
                Some(p.key()),
            ));
        }
    }
    for p in &s.spare {
        if a_out.contains(&p.key()) {
            v.push(Violation::new(
                "probes_disjoint",
                "spare pair is also an out-probe",
                Some(p.key()),
            ));
        }
    }
    for p in &s.b_all {
        let key = p.key();
        if !train.contains(&key) {
            v.push(Violation::new(
                "b_all_subset_a_train",
                "B_all pair missing from A_train",
                Some(key.clone()),
            ));
        }
        if a_in.contains(&key) {
            v.push(Violation::new(
                "b_all_disjoint_a_in",
                "B_all pair is an in-probe",
                Some(key.clone()),
            ));
        }
        if spare.contains(&key) {
            v.push(Violation::new(
                "b_all_disjoint_spare",
                "B_all pair is a spare probe",
                Some(key.clone()),
            ));
        }
        if p.domain.tier == Tier::AlicePrivate {
            v.push(Violation::new(
                "b_all_no_private",
                "B_all pair from a private-tier domain",
                Some(key),
            ));
        }
    }
    for p in &s.a_ood {
        if p.domain.tier != Tier::Ood {
            v.push(Violation::new(
                "a_ood_tier",
                "OOD probe pair from a non-OOD domain",
                Some(p.key()),
            ));
        }
        if train.contains(&p.key()) {
            v.push(Violation::new(
                "a_ood_disjoint_a_train",
                "OOD probe pair is in A_train",
                Some(p.key()),
            ));
        }
    }
    for p in &s.a_train {
        if p.domain.tier == Tier::Ood {
            v.push(Violation::new(
                "a_train_no_ood",
                "A_train pair from an OOD domain",
                Some(p.key()),
            ));
        }
    }

    let ins = per_domain_counts(&s.a_in);
    let outs = per_domain_counts(&s.a_out);
    let mut probe_domains: BTreeSet<&str> = ins.keys().copied().collect();
    probe_domains.extend(outs.keys().copied());
    probe_domains.extend(s.a_train.iter().map(|p| p.domain.name.as_str()));
    for d in probe_domains {
        let (ni, no) = (ins.get(d).copied().unwrap_or(0), outs.get(d).copied().unwrap_or(0));
        if ni != s.k || no != s.k {
            v.push(Violation::new(
                "probe_size",
                format!("domain {d}: |A_in|={ni}, |A_out|={no}, expected k={}", s.k),
                None,
            ));
        }
    }
    v
}

pub fn verify_shadow_splits(splits: &[ShadowSplit], k_prime: usize) -> Vec<Violation> {
    let mut v = Vec::new();
    let by_id: BTreeMap<ShadowId, &ShadowSplit> = splits.iter().map(|s| (s.id, s)).collect();
    for s in splits {
        let train = key_set(&s.b_train);
        for p in &s.b_in {
            if !train.contains(&p.key()) {
                v.push(Violation::new(
                    "b_in_subset_b_train",
                    format!("split {}", s.id),
                    Some(p.key()),
                ));
            }
        }
        for p in &s.b_out {
            if train.contains(&p.key()) {
                v.push(Violation::new(
                    "b_out_disjoint_b_train",
                    format!("split {}", s.id),
                    Some(p.key()),
                ));
            }
        }
        for (name, set) in [("b_in", &s.b_in), ("b_out", &s.b_out)] {
            for (d, n) in per_domain_counts(set) {
                if n != k_prime {
                    v.push(Violation::new(
                        "shadow_probe_size",
                        format!("split {} {name} domain {d}: {n} pairs, expected {k_prime}", s.id),
                        None,
                    ));
                }
            }
        }
        if s.id.polarity == Polarity::Plus {
            let twin = ShadowId {
                group: s.id.group,
                polarity: Polarity::Minus,
            };
            match by_id.get(&twin) {
                Some(m) if key_set(&m.b_out) == key_set(&s.b_in) && key_set(&m.b_in) == key_set(&s.b_out) => {}
                Some(_) => v.push(Violation::new(
                    "polarity_swap",
                    format!("split {} and {twin} do not swap probes", s.id),
                    None,
                )),
                None => v.push(Violation::new(
                    "polarity_swap",
                    format!("split {} has no {twin} twin", s.id),
                    None,
                )),
            }
        }
    }
    v
}
