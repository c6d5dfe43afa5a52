//! Append-only translation cache.
//!
//! One TSV file per oracle, one line per translated pair:
//! `oracle_id<TAB>domain<TAB>index<TAB>hypothesis<TAB>score`, where the score
//! column is empty when the oracle exposes none. Lines are appended as
//! translations arrive, so an interrupted run keeps everything it paid for.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use seqmia_core::corpus::{detokenize, tokenize, PairKey};
use seqmia_core::translator::Translation;

use crate::error::{Result, ToolError};

#[derive(Debug)]
pub struct TranslationCache {
    path: PathBuf,
    oracle_id: String,
    entries: BTreeMap<PairKey, Translation>,
    writer: Mutex<BufWriter<File>>,
}

fn format_line(oracle_id: &str, key: &PairKey, t: &Translation) -> String {
    let score = t.model_score.map(|s| s.to_string()).unwrap_or_default();
    format!(
        "{oracle_id}\t{}\t{}\t{}\t{score}\n",
        key.domain,
        key.index,
        detokenize(&t.hypothesis)
    )
}

/// Parses cache lines for `oracle_id`. Lines of other oracles are an error.
pub fn parse_cache(path: &Path, text: &str, oracle_id: &str) -> Result<BTreeMap<PairKey, Translation>> {
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, domain, index, hypothesis, score] = cols[..] else {
            return Err(ToolError::parse(
                path,
                no,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        };
        if id != oracle_id {
            return Err(ToolError::parse(
                path,
                no,
                format!("entry for oracle {id:?} in the cache of {oracle_id:?}"),
            ));
        }
        let index: u32 = index
            .parse()
            .map_err(|_| ToolError::parse(path, no, format!("bad index {index:?}")))?;
        let model_score = if score.is_empty() {
            None
        } else {
            Some(
                score
                    .parse::<f64>()
                    .map_err(|_| ToolError::parse(path, no, format!("bad score {score:?}")))?,
            )
        };
        // append-only: the first answer wins
        entries.entry(PairKey::new(domain, index)).or_insert(Translation {
            hypothesis: tokenize(hypothesis),
            model_score,
            origin: oracle_id.to_string(),
        });
    }
    Ok(entries)
}

impl TranslationCache {
    /// Opens (creating if needed) the cache at `path`. A final line without
    /// its newline is the trace of an interrupted append and is dropped.
    pub fn open(path: &Path, oracle_id: &str) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
        }
        let mut text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ToolError::io(path, e)),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            log::warn!("{}: dropping a truncated final line", path.display());
            text.truncate(keep);
            let f = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| ToolError::io(path, e))?;
            f.set_len(keep as u64).map_err(|e| ToolError::io(path, e))?;
        }
        let entries = parse_cache(path, &text, oracle_id)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ToolError::io(path, e))?;
        Ok(TranslationCache {
            path: path.to_path_buf(),
            oracle_id: oracle_id.to_string(),
            entries,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn oracle_id(&self) -> &str {
        &self.oracle_id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &PairKey) -> Option<&Translation> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &PairKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes one line to disk. Safe to call from several threads.
    pub fn append(&self, key: &PairKey, t: &Translation) -> Result<()> {
        let line = format_line(&self.oracle_id, key, t);
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        w.write_all(line.as_bytes())
            .and_then(|()| w.flush())
            .map_err(|e| ToolError::io(&self.path, e))
    }

    /// Makes an appended translation visible to [`Self::get`].
    pub fn remember(&mut self, key: PairKey, t: Translation) {
        self.entries.entry(key).or_insert(t);
    }
}
