//! Parallel corpus types and the pure preprocessing steps: exact-pair
//! deduplication, seeded shuffling, vocabularies and OOV flags.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// One whitespace-free, non-empty text unit of pre-tokenized text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(Error::invalid("empty token"));
        }
        if surface.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("token {surface:?} contains whitespace")));
        }
        Ok(Token(surface))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Token::new(s)
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Splits a pre-tokenized line on whitespace.
pub fn tokenize(line: &str) -> Vec<Token> {
    line.split_whitespace().map(|t| Token(t.to_string())).collect()
}

/// Joins tokens with single spaces.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

/// Who may see a subcorpus: shared by target and attacker, private to the
/// target, or out of domain (seen by neither model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Shared,
    #[serde(alias = "private")]
    AlicePrivate,
    Ood,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Shared => "shared",
            Tier::AlicePrivate => "alice_private",
            Tier::Ood => "ood",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainLabel {
    pub name: String,
    pub tier: Tier,
}

impl DomainLabel {
    pub fn new(name: impl Into<String>, tier: Tier) -> Self {
        DomainLabel {
            name: name.into(),
            tier,
        }
    }
}

/// Corpus-wide key of a sentence pair. Serialized as `[domain, index]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, u32)", into = "(String, u32)")]
pub struct PairKey {
    pub domain: String,
    pub index: u32,
}

impl PairKey {
    pub fn new(domain: impl Into<String>, index: u32) -> Self {
        PairKey {
            domain: domain.into(),
            index,
        }
    }
}

impl From<(String, u32)> for PairKey {
    fn from((domain, index): (String, u32)) -> Self {
        PairKey { domain, index }
    }
}

impl From<PairKey> for (String, u32) {
    fn from(k: PairKey) -> Self {
        (k.domain, k.index)
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.domain, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Vec<Token>,
    pub reference: Vec<Token>,
    pub domain: DomainLabel,
    /// 1-based position within the domain.
    pub index: u32,
}

impl SentencePair {
    pub fn new(source: Vec<Token>, reference: Vec<Token>, domain: DomainLabel, index: u32) -> Result<Self> {
        if source.is_empty() || reference.is_empty() {
            return Err(Error::invalid(format!(
                "pair {}:{index} has an empty side",
                domain.name
            )));
        }
        if index == 0 {
            return Err(Error::invalid("pair indices start at 1"));
        }
        Ok(SentencePair {
            source,
            reference,
            domain,
            index,
        })
    }

    pub fn key(&self) -> PairKey {
        PairKey::new(self.domain.name.clone(), self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Retained pairs per domain, I(d).
    pub per_domain: BTreeMap<String, usize>,
    pub duplicates_removed: usize,
}

impl CorpusStats {
    pub fn from_pairs(pairs: &[SentencePair]) -> Self {
        let mut per_domain = BTreeMap::new();
        for p in pairs {
            *per_domain.entry(p.domain.name.clone()).or_insert(0) += 1;
        }
        CorpusStats {
            per_domain,
            duplicates_removed: 0,
        }
    }
}

/// Rewrites indices so each domain is numbered 1..=I(d) in list order.
pub fn reindex(pairs: &mut [SentencePair]) {
    let mut next: BTreeMap<String, u32> = BTreeMap::new();
    for p in pairs.iter_mut() {
        let n = next.entry(p.domain.name.clone()).or_insert(0);
        *n += 1;
        p.index = *n;
    }
}

/// Keeps the first occurrence of every exact (source, reference) pair,
/// corpus-wide, and renumbers what is left.
pub fn deduplicate(pairs: Vec<SentencePair>) -> (Vec<SentencePair>, CorpusStats) {
    let mut seen: BTreeSet<(Vec<Token>, Vec<Token>)> = BTreeSet::new();
    let before = pairs.len();
    let mut kept: Vec<SentencePair> = pairs
        .into_iter()
        .filter(|p| seen.insert((p.source.clone(), p.reference.clone())))
        .collect();
    reindex(&mut kept);
    let mut stats = CorpusStats::from_pairs(&kept);
    stats.duplicates_removed = before - kept.len();
    (kept, stats)
}

/// Uniform seeded permutation (Fisher-Yates over a [`rng`] stream) followed
/// by renumbering.
pub fn shuffle_seeded(mut pairs: Vec<SentencePair>, seed: u64) -> Vec<SentencePair> {
    let mut r = rng::stream(seed, "corpus/shuffle", &[]);
    pairs.shuffle(&mut r);
    reindex(&mut pairs);
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub side: Side,
    types: BTreeSet<Token>,
}

impl Vocabulary {
    pub fn contains(&self, t: &Token) -> bool {
        self.types.contains(t)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.types.iter()
    }

    pub fn union(&self, other: &Vocabulary) -> Vocabulary {
        Vocabulary {
            side: self.side,
            types: self.types.union(&other.types).cloned().collect(),
        }
    }
}

pub fn build_vocab<'a>(pairs: impl IntoIterator<Item = &'a SentencePair>, side: Side) -> Vocabulary {
    let mut types = BTreeSet::new();
    for p in pairs {
        let tokens = match side {
            Side::Source => &p.source,
            Side::Reference => &p.reference,
        };
        types.extend(tokens.iter().cloned());
    }
    Vocabulary { side, types }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovFlags {
    pub oov_in_source: bool,
    pub oov_in_reference: bool,
    pub oov_in_both: bool,
}

/// Flags OOV words against vocabularies of the attacker's training data.
pub fn oov_flags(pair: &SentencePair, src_vocab: &Vocabulary, ref_vocab: &Vocabulary) -> OovFlags {
    let oov_in_source = pair.source.iter().any(|t| !src_vocab.contains(t));
    let oov_in_reference = pair.reference.iter().any(|t| !ref_vocab.contains(t));
    OovFlags {
        oov_in_source,
        oov_in_reference,
        oov_in_both: oov_in_source && oov_in_reference,
    }
}

#[cfg(test)]
pub(crate) fn pair(domain: &str, index: u32, src: &str, reference: &str) -> SentencePair {
    SentencePair::new(
        tokenize(src),
        tokenize(reference),
        DomainLabel::new(domain, Tier::Shared),
        index,
    )
    .unwrap()
}
