//! Parallel text files and the canonical corpus TSV.
//!
//! The canonical file has one pair per line,
//! `domain<TAB>index<TAB>source<TAB>reference`, with tokens joined by single
//! spaces. Tiers are not stored; readers get them from the run config.

use std::fs;
use std::path::Path;

use seqmia_core::corpus::{detokenize, tokenize, DomainLabel, SentencePair, Tier};

use crate::error::{Result, ToolError};
use crate::files::write_atomic;

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Reads one domain from line-aligned source and reference files. Pairs are
/// numbered by line.
pub fn read_parallel(source: &Path, reference: &Path, domain: &DomainLabel) -> Result<Vec<SentencePair>> {
    let src = read_lines(source)?;
    let refs = read_lines(reference)?;
    if src.len() != refs.len() {
        return Err(ToolError::Config(format!(
            "domain {}: {} has {} lines but {} has {}",
            domain.name,
            source.display(),
            src.len(),
            reference.display(),
            refs.len()
        )));
    }
    let mut out = Vec::with_capacity(src.len());
    for (i, (s, r)) in src.iter().zip(&refs).enumerate() {
        let line = i + 1;
        let (s, r) = (tokenize(s), tokenize(r));
        if s.is_empty() {
            return Err(ToolError::parse(source, line, "empty line"));
        }
        if r.is_empty() {
            return Err(ToolError::parse(reference, line, "empty line"));
        }
        out.push(SentencePair::new(s, r, domain.clone(), line as u32)?);
    }
    Ok(out)
}

pub fn parse_tier(s: &str) -> Option<Tier> {
    match s {
        "shared" => Some(Tier::Shared),
        "alice_private" | "private" => Some(Tier::AlicePrivate),
        "ood" => Some(Tier::Ood),
        _ => None,
    }
}

pub fn corpus_tsv(pairs: &[SentencePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.domain.name,
            p.index,
            detokenize(&p.source),
            detokenize(&p.reference)
        ));
    }
    out
}

pub fn write_corpus_tsv(path: &Path, pairs: &[SentencePair]) -> Result<()> {
    write_atomic(path, corpus_tsv(pairs).as_bytes())
}

/// Reads a canonical TSV; `tier_of` maps domain names to tiers.
pub fn read_corpus_tsv(path: &Path, tier_of: impl Fn(&str) -> Option<Tier>) -> Result<Vec<SentencePair>> {
    let lines = read_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let no = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let [domain, index, source, reference] = cols[..] else {
            return Err(ToolError::parse(
                path,
                no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        };
        let tier =
            tier_of(domain).ok_or_else(|| ToolError::parse(path, no, format!("domain {domain:?} has no tier")))?;
        let index: u32 = index
            .parse()
            .map_err(|_| ToolError::parse(path, no, format!("bad index {index:?}")))?;
        let pair = SentencePair::new(
            tokenize(source),
            tokenize(reference),
            DomainLabel::new(domain, tier),
            index,
        )
        .map_err(|e| ToolError::parse(path, no, e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}
