//! The black-box translation oracle abstraction and the synthetic memorizing
//! translator used for controlled experiments.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PairKey, SentencePair, Token, Vocabulary};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    /// May be empty for degenerate output.
    pub hypothesis: Vec<Token>,
    /// Unnormalized sequence score, only when the oracle exposes one.
    pub model_score: Option<f64>,
    pub origin: String,
}

/// Anything that turns source sentences into translations, one call per
/// pair. Implementations may be remote, cached or synthetic.
pub trait Oracle {
    fn id(&self) -> &str;

    /// Returns exactly one translation per input pair, in input order.
    fn translate_batch(&mut self, pairs: &[SentencePair]) -> Result<Vec<Translation>>;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> Result<Vec<Translation>> {
        (**self).translate_batch(pairs)
    }
}

impl<O: Oracle + ?Sized> Oracle for alloc::boxed::Box<O> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> Result<Vec<Translation>> {
        (**self).translate_batch(pairs)
    }
}

/// Declarative description of an oracle; the companion crate instantiates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    FileCache {
        path: String,
        #[serde(default)]
        id: Option<String>,
    },
    HttpApi {
        endpoint: String,
        #[serde(default)]
        auth_env: Option<String>,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_rps")]
        requests_per_second: f64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default)]
        id: Option<String>,
    },
    Synthetic {
        memorization: f64,
        noise: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_batch_size() -> usize {
    32
}
fn default_rps() -> f64 {
    10.0
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizingConfig {
    /// Pairs the synthetic model was "trained on".
    pub member_set: BTreeSet<PairKey>,
    /// Probability `m` that a member is reproduced verbatim.
    pub memorization_rate: f64,
    /// Per-token corruption probability `q`, split evenly between
    /// replacement and deletion.
    pub noise_rate: f64,
    pub seed: u64,
}

impl MemorizingConfig {
    pub fn new(member_set: BTreeSet<PairKey>, memorization_rate: f64, noise_rate: f64, seed: u64) -> Result<Self> {
        for (name, v) in [("memorization rate", memorization_rate), ("noise rate", noise_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(MemorizingConfig {
            member_set,
            memorization_rate,
            noise_rate,
            seed,
        })
    }
}

fn key_parts(pair: &SentencePair) -> [u8; 4] {
    pair.index.to_le_bytes()
}

/// Synthetic translation of one pair.
///
/// Members are echoed verbatim with probability `m`. Everything else goes
/// through the same noise channel: each reference token is replaced by a
/// uniformly drawn `vocabulary` token with probability `q/2`, deleted with
/// probability `q/2`, and kept otherwise. The model score is the mean log
/// probability of the per-token channel decisions (0 for a verbatim echo).
/// Output depends only on the config seed and the pair's `(domain, index)`.
pub fn synth_translate(config: &MemorizingConfig, vocabulary: &[Token], pair: &SentencePair) -> Translation {
    let domain = pair.domain.name.as_bytes();
    let index = key_parts(pair);
    if config.member_set.contains(&pair.key()) {
        let mut coin = rng::stream(config.seed, "synth/memorize", &[domain, &index]);
        if coin.random::<f64>() < config.memorization_rate {
            return Translation {
                hypothesis: pair.reference.clone(),
                model_score: Some(0.0),
                origin: String::from("synthetic"),
            };
        }
    }
    let q = config.noise_rate;
    let mut noise = rng::stream(config.seed, "synth/noise", &[domain, &index]);
    let mut hypothesis = Vec::with_capacity(pair.reference.len());
    let mut log_p = 0.0;
    for token in &pair.reference {
        let u: f64 = noise.random();
        if u < q / 2.0 {
            log_p += libm::log(q / 2.0);
            if !vocabulary.is_empty() {
                hypothesis.push(vocabulary[noise.random_range(0..vocabulary.len())].clone());
            }
        } else if u < q {
            log_p += libm::log(q / 2.0);
        } else {
            log_p += libm::log(1.0 - q);
            hypothesis.push(token.clone());
        }
    }
    Translation {
        hypothesis,
        model_score: Some(log_p / pair.reference.len() as f64),
        origin: String::from("synthetic"),
    }
}

/// A memorizing translator standing in for a trained MT model.
#[derive(Debug, Clone)]
pub struct SyntheticTranslator {
    id: String,
    config: MemorizingConfig,
    vocabulary: Vec<Token>,
}

impl SyntheticTranslator {
    pub fn new(id: impl Into<String>, config: MemorizingConfig, vocabulary: &Vocabulary) -> Self {
        SyntheticTranslator {
            id: id.into(),
            config,
            vocabulary: vocabulary.iter().cloned().collect(),
        }
    }

    pub fn config(&self) -> &MemorizingConfig {
        &self.config
    }

    pub fn translate(&self, pair: &SentencePair) -> Translation {
        let mut t = synth_translate(&self.config, &self.vocabulary, pair);
        t.origin.clone_from(&self.id);
        t
    }
}

impl Oracle for SyntheticTranslator {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> Result<Vec<Translation>> {
        Ok(pairs.iter().map(|p| self.translate(p)).collect())
    }
}

/// Counts translated pairs passing through to the wrapped oracle.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    calls: u64,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle { inner, calls: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Oracle> Oracle for CountingOracle<O> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn translate_batch(&mut self, pairs: &[SentencePair]) -> Result<Vec<Translation>> {
        self.calls += pairs.len() as u64;
        self.inner.translate_batch(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, tokenize, DomainLabel, Side, Tier};
    use crate::metrics::sentence_bleu;

    fn corpus(n: u32) -> Vec<SentencePair> {
        (1..=n)
            .map(|i| {
                let words: Vec<String> = (0..12).map(|j| format!("w{}", (i * 7 + j * 13) % 97)).collect();
                SentencePair::new(
                    tokenize("src"),
                    tokenize(&words.join(" ")),
                    DomainLabel::new("d", Tier::Shared),
                    i,
                )
                .unwrap()
            })
            .collect()
    }

    fn members(pairs: &[SentencePair]) -> BTreeSet<PairKey> {
        pairs.iter().map(SentencePair::key).collect()
    }

    #[test]
    fn rates_are_validated() {
        assert!(MemorizingConfig::new(BTreeSet::new(), 1.5, 0.0, 0).is_err());
        assert!(MemorizingConfig::new(BTreeSet::new(), 0.5, -0.1, 0).is_err());
    }

    #[test]
    fn perfect_memorization_and_clean_channel() {
        let pairs = corpus(50);
        let vocab = build_vocab(&pairs, Side::Reference);
        let cfg = MemorizingConfig::new(members(&pairs[..25]), 1.0, 0.7, 1).unwrap();
        let t = SyntheticTranslator::new("s", cfg, &vocab);
        for p in &pairs[..25] {
            assert_eq!(t.translate(p).hypothesis, p.reference);
        }
        let clean = SyntheticTranslator::new(
            "s",
            MemorizingConfig::new(BTreeSet::new(), 0.0, 0.0, 1).unwrap(),
            &vocab,
        );
        for p in &pairs {
            let out = clean.translate(p);
            assert_eq!(out.hypothesis, p.reference);
            assert_eq!(out.model_score, Some(0.0));
        }
    }

    #[test]
    fn m_zero_members_share_the_noise_channel() {
        let pairs = corpus(40);
        let vocab = build_vocab(&pairs, Side::Reference);
        let member = SyntheticTranslator::new(
            "a",
            MemorizingConfig::new(members(&pairs), 0.0, 0.3, 9).unwrap(),
            &vocab,
        );
        let outsider = SyntheticTranslator::new(
            "a",
            MemorizingConfig::new(BTreeSet::new(), 0.0, 0.3, 9).unwrap(),
            &vocab,
        );
        for p in &pairs {
            assert_eq!(member.translate(p), outsider.translate(p));
        }
    }

    #[test]
    fn full_noise_destroys_overlap() {
        // wide vocabulary so accidental re-draws of the original token are rare
        let pairs: Vec<SentencePair> = (1..=1000)
            .map(|i| {
                let words: Vec<String> = (0..15).map(|j| format!("t{}", (i * 31 + j * 17) % 5000)).collect();
                SentencePair::new(
                    tokenize("s"),
                    tokenize(&words.join(" ")),
                    DomainLabel::new("d", Tier::Shared),
                    i,
                )
                .unwrap()
            })
            .collect();
        let vocab = build_vocab(&pairs, Side::Reference);
        let t = SyntheticTranslator::new(
            "q1",
            MemorizingConfig::new(BTreeSet::new(), 0.0, 1.0, 4).unwrap(),
            &vocab,
        );
        let mean: f64 = pairs
            .iter()
            .map(|p| sentence_bleu(&t.translate(p).hypothesis, &p.reference).unwrap().value())
            .sum::<f64>()
            / pairs.len() as f64;
        assert!(mean < 0.05, "mean BLEU {mean}");
    }

    #[test]
    fn deterministic_and_keyed() {
        let pairs = corpus(30);
        let vocab = build_vocab(&pairs, Side::Reference);
        let cfg = MemorizingConfig::new(members(&pairs[..10]), 0.5, 0.4, 77).unwrap();
        let mut a = SyntheticTranslator::new("x", cfg.clone(), &vocab);
        let mut b = SyntheticTranslator::new("x", cfg, &vocab);
        assert_eq!(a.translate_batch(&pairs).unwrap(), b.translate_batch(&pairs).unwrap());
        // translating a subset gives the same outputs as the full batch
        assert_eq!(a.translate_batch(&pairs[5..7]).unwrap()[1], b.translate(&pairs[6]));
    }

    #[test]
    fn members_score_higher_bleu() {
        let pairs = corpus(2000);
        let vocab = build_vocab(&pairs, Side::Reference);
        let (ins, outs) = pairs.split_at(1000);
        let t = SyntheticTranslator::new("m", MemorizingConfig::new(members(ins), 1.0, 0.3, 2).unwrap(), &vocab);
        let mean = |ps: &[SentencePair]| {
            ps.iter()
                .map(|p| sentence_bleu(&t.translate(p).hypothesis, &p.reference).unwrap().value())
                .sum::<f64>()
                / ps.len() as f64
        };
        assert!(mean(ins) > mean(outs));
    }

    #[test]
    fn counting_oracle_counts_pairs() {
        let pairs = corpus(7);
        let vocab = build_vocab(&pairs, Side::Reference);
        let inner = SyntheticTranslator::new(
            "c",
            MemorizingConfig::new(BTreeSet::new(), 0.0, 0.1, 0).unwrap(),
            &vocab,
        );
        let mut o = CountingOracle::new(inner);
        o.translate_batch(&pairs).unwrap();
        o.translate_batch(&pairs[..2]).unwrap();
        assert_eq!(o.calls(), 9);
    }
}
