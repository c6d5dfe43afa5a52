//! N-gram statistics over pre-tokenized text: clipped ("modified") n-gram
//! precision, add-one smoothed sentence BLEU and pooled corpus BLEU.
//!
//! All functions are generic over the token type so they work equally on
//! [`crate::corpus::Token`] slices and plain `&str` slices. Scores are kept
//! in `[0, 1]`.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Highest n-gram order used by BLEU.
pub const MAX_ORDER: usize = 4;

/// Multiset of contiguous n-grams of a single order, borrowing from the
/// token sequence it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramCounts<'a, T> {
    order: usize,
    counts: BTreeMap<&'a [T], u32>,
}

impl<'a, T: Ord> NgramCounts<'a, T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, ngram: &[T]) -> u32 {
        self.counts.get(ngram).copied().unwrap_or(0)
    }

    /// Number of distinct n-grams.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total number of n-gram occurrences.
    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [T], u32)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::invalid(alloc::format!(
            "n-gram order {order} outside 1..={MAX_ORDER}"
        )))
    }
}

fn count_ngrams<T: Ord>(tokens: &[T], order: usize) -> BTreeMap<&[T], u32> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= order {
        for window in tokens.windows(order) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

pub fn extract_ngrams<T: Ord>(tokens: &[T], order: usize) -> Result<NgramCounts<'_, T>> {
    check_order(order)?;
    Ok(NgramCounts {
        order,
        counts: count_ngrams(tokens, order),
    })
}

/// Clipped match count and hypothesis n-gram total for one order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub matches: u32,
    pub total: u32,
}

impl Precision {
    /// `matches / total`, defined as 0 when the hypothesis has no n-grams.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.matches) / f64::from(self.total)
        }
    }
}

fn clipped<T: Ord>(hypothesis: &[T], reference: &[T], order: usize) -> Precision {
    let hyp = count_ngrams(hypothesis, order);
    let reference = count_ngrams(reference, order);
    let mut p = Precision::default();
    for (ngram, count) in hyp {
        p.total += count;
        p.matches += count.min(reference.get(ngram).copied().unwrap_or(0));
    }
    p
}

/// Modified n-gram precision: each hypothesis n-gram matches at most as many
/// times as it occurs in the reference.
pub fn modified_precision<T: Ord>(hypothesis: &[T], reference: &[T], order: usize) -> Result<Precision> {
    check_order(order)?;
    Ok(clipped(hypothesis, reference, order))
}

/// A BLEU value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BleuScore(f64);

impl BleuScore {
    pub const ZERO: BleuScore = BleuScore(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    fn clamped(v: f64) -> Self {
        BleuScore(v.clamp(0.0, 1.0))
    }
}

/// Sufficient statistics of one (hypothesis, reference) segment. Sentence
/// BLEU, corpus BLEU and the modified precisions are all functions of these,
/// and summing them pools a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub precisions: [Precision; MAX_ORDER],
    pub hyp_len: u32,
    pub ref_len: u32,
}

impl SegmentStats {
    pub fn compute<T: Ord>(hypothesis: &[T], reference: &[T]) -> Self {
        let mut precisions = [Precision::default(); MAX_ORDER];
        for (i, p) in precisions.iter_mut().enumerate() {
            *p = clipped(hypothesis, reference, i + 1);
        }
        SegmentStats {
            precisions,
            hyp_len: hypothesis.len() as u32,
            ref_len: reference.len() as u32,
        }
    }

    pub fn add(&mut self, other: &SegmentStats) {
        for (a, b) in self.precisions.iter_mut().zip(other.precisions.iter()) {
            a.matches += b.matches;
            a.total += b.total;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            libm::exp(1.0 - f64::from(self.ref_len) / f64::from(self.hyp_len))
        }
    }

    /// Smoothed sentence BLEU: order 1 unsmoothed, add-one on numerator and
    /// denominator for orders 2..=4.
    pub fn sentence_bleu(&self) -> BleuScore {
        if self.hyp_len == 0 || self.precisions[0].matches == 0 {
            return BleuScore::ZERO;
        }
        let mut log_sum = libm::log(self.precisions[0].ratio());
        for p in &self.precisions[1..] {
            log_sum += libm::log(f64::from(p.matches + 1) / f64::from(p.total + 1));
        }
        BleuScore::clamped(self.brevity_penalty() * libm::exp(log_sum / MAX_ORDER as f64))
    }

    /// Unsmoothed BLEU of these (possibly pooled) counts.
    pub fn corpus_bleu(&self) -> BleuScore {
        if self.precisions.iter().any(|p| p.matches == 0) {
            return BleuScore::ZERO;
        }
        let log_sum: f64 = self.precisions.iter().map(|p| libm::log(p.ratio())).sum();
        BleuScore::clamped(self.brevity_penalty() * libm::exp(log_sum / MAX_ORDER as f64))
    }
}

pub fn sentence_bleu<T: Ord>(hypothesis: &[T], reference: &[T]) -> Result<BleuScore> {
    if reference.is_empty() {
        return Err(Error::invalid("sentence BLEU needs a non-empty reference"));
    }
    Ok(SegmentStats::compute(hypothesis, reference).sentence_bleu())
}

/// Corpus BLEU with n-gram counts and lengths pooled over all segments.
pub fn corpus_bleu<'a, T, I>(pairs: I) -> Result<BleuScore>
where
    T: Ord + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let mut pooled = SegmentStats::default();
    let mut n = 0usize;
    for (hyp, reference) in pairs {
        if reference.is_empty() {
            return Err(Error::invalid(alloc::format!(
                "corpus BLEU segment {n} has an empty reference"
            )));
        }
        pooled.add(&SegmentStats::compute(hyp, reference));
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("corpus BLEU needs at least one segment"));
    }
    Ok(pooled.corpus_bleu())
}

/// Corpus BLEU from already computed per-segment statistics.
pub fn corpus_bleu_from_stats<'a>(stats: impl IntoIterator<Item = &'a SegmentStats>) -> Result<BleuScore> {
    let mut pooled = SegmentStats::default();
    let mut n = 0usize;
    for s in stats {
        pooled.add(s);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("corpus BLEU needs at least one segment"));
    }
    Ok(pooled.corpus_bleu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn ngram_enumeration() {
        let t = toks("a b a");
        let uni = extract_ngrams(&t, 1).unwrap();
        assert_eq!(uni.get(&["a"]), 2);
        assert_eq!(uni.get(&["b"]), 1);
        assert_eq!(uni.len(), 2);
        let bi = extract_ngrams(&t, 2).unwrap();
        assert_eq!(bi.get(&["a", "b"]), 1);
        assert_eq!(bi.get(&["b", "a"]), 1);
        assert_eq!(bi.total(), 2);
        assert!(extract_ngrams(&["a"], 2).unwrap().is_empty());
    }

    #[test]
    fn order_is_checked() {
        assert!(matches!(extract_ngrams(&["a"], 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(extract_ngrams(&["a"], 5), Err(Error::InvalidArgument(_))));
        assert!(modified_precision(&["a"], &["a"], 5).is_err());
    }

    #[test]
    fn clipping() {
        let p = modified_precision(&toks("the the the"), &toks("the cat"), 1).unwrap();
        assert_eq!(p, Precision { matches: 1, total: 3 });
        assert!((p.ratio() - 1.0 / 3.0).abs() < 1e-15);
        let p = modified_precision(&toks("x y"), &toks("a b"), 1).unwrap();
        assert_eq!(p.ratio(), 0.0);
        let s = toks("a b c d e");
        for n in 1..=4 {
            assert_eq!(modified_precision(&s, &s, n).unwrap().ratio(), 1.0);
        }
        let p = modified_precision(&toks("a"), &toks("a b"), 3).unwrap();
        assert_eq!(p, Precision { matches: 0, total: 0 });
        assert_eq!(p.ratio(), 0.0);
    }

    #[test]
    fn sentence_bleu_edges() {
        let r = toks("a b c d e f g h i j");
        // add-one on both sides of a ratio equal to one leaves it at one
        assert!((sentence_bleu(&r, &r).unwrap().value() - 1.0).abs() < 1e-15);
        assert_eq!(sentence_bleu(&toks("x y z"), &r).unwrap().value(), 0.0);
        assert_eq!(sentence_bleu::<&str>(&[], &r).unwrap().value(), 0.0);
        assert!(sentence_bleu(&r, &[]).is_err());
    }

    #[test]
    fn sentence_bleu_short_hypothesis() {
        // p1 = 3/3, p2 = (2+1)/(2+1), p3 = (1+1)/(1+1), p4 = (0+1)/(0+1)
        let hyp = toks("the cat sat");
        let reference = toks("the cat sat down");
        let expected = libm::exp(1.0 - 4.0 / 3.0);
        let got = sentence_bleu(&hyp, &reference).unwrap().value();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn unigram_only_overlap_is_positive() {
        let hyp = toks("c a");
        let reference = toks("a b c");
        let s = SegmentStats::compute(&hyp, &reference);
        assert_eq!(s.precisions[0].ratio(), 1.0);
        assert_eq!(s.precisions[1].ratio(), 0.0);
        assert!(s.sentence_bleu().value() > 0.0);
    }

    #[test]
    fn corpus_bleu_identity_and_duplication() {
        let a = toks("a b c d e");
        let b = toks("f g h i j k");
        let identity = corpus_bleu([(&a[..], &a[..]), (&b[..], &b[..])]).unwrap();
        assert_eq!(identity.value(), 1.0);

        let h1 = toks("a b c d x");
        let h2 = toks("f g h i");
        let once = corpus_bleu([(&h1[..], &a[..]), (&h2[..], &b[..])]).unwrap();
        let twice = corpus_bleu([
            (&h1[..], &a[..]),
            (&h2[..], &b[..]),
            (&h1[..], &a[..]),
            (&h2[..], &b[..]),
        ])
        .unwrap();
        assert!((once.value() - twice.value()).abs() < 1e-15);
        assert!(corpus_bleu::<&str, Vec<(&[&str], &[&str])>>(vec![]).is_err());
    }

    #[test]
    fn corpus_bleu_zero_when_a_pooled_precision_is_zero() {
        let h = toks("a b c");
        let r = toks("a b c d");
        // no 4-grams in the hypothesis at all
        assert_eq!(corpus_bleu([(&h[..], &r[..])]).unwrap().value(), 0.0);
    }
}
