//! Brute-force BLEU written without maps or shared statistics: every n-gram
//! count is a linear scan.
#![allow(dead_code)]

fn occurrences(tokens: &[u8], gram: &[u8]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| &tokens[i..i + gram.len()] == gram)
        .count()
}

/// `(clipped matches, hypothesis n-gram count)`.
pub fn precision(hyp: &[u8], reference: &[u8], n: usize) -> (usize, usize) {
    if hyp.len() < n {
        return (0, 0);
    }
    let mut matches = 0;
    for i in 0..=hyp.len() - n {
        let gram = &hyp[i..i + n];
        // count each distinct n-gram once, at its first position
        if (0..i).any(|j| &hyp[j..j + n] == gram) {
            continue;
        }
        matches += occurrences(hyp, gram).min(occurrences(reference, gram));
    }
    (matches, hyp.len() - n + 1)
}

fn brevity(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

pub fn sentence_bleu(hyp: &[u8], reference: &[u8]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let (m1, t1) = precision(hyp, reference, 1);
    if m1 == 0 {
        return 0.0;
    }
    let mut product = m1 as f64 / t1 as f64;
    for n in 2..=4 {
        let (m, t) = precision(hyp, reference, n);
        product *= (m + 1) as f64 / (t + 1) as f64;
    }
    brevity(hyp.len(), reference.len()) * product.powf(0.25)
}

pub fn corpus_bleu(pairs: &[(Vec<u8>, Vec<u8>)]) -> f64 {
    let mut product = 1.0;
    for n in 1..=4 {
        let (mut m, mut t) = (0, 0);
        for (h, r) in pairs {
            let (a, b) = precision(h, r, n);
            m += a;
            t += b;
        }
        if m == 0 {
            return 0.0;
        }
        product *= m as f64 / t as f64;
    }
    let hyp_len: usize = pairs.iter().map(|p| p.0.len()).sum();
    let ref_len: usize = pairs.iter().map(|p| p.1.len()).sum();
    brevity(hyp_len, ref_len) * product.powf(0.25)
}
