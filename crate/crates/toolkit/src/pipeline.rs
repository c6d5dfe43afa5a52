//! The staged pipeline behind the subcommands.
//!
//! Stages are `split`, `translate`, `features`, `attack` and `group-attack`.
//! Each one brings its prerequisites up to date first, records its outputs
//! in the run manifest, and is skipped when rerun with unchanged inputs.
//! Translations always go through the per-oracle cache, so a rerun never
//! pays for a pair twice.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use seqmia_core::attack::{
    bleu_gap_from_value, build_attack_classifier, evaluate_sentence_attack, group_attack, measure_bleu_gap,
    probe_features, tag_oov, translate_probes, GroupOptions, ShadowRecords, TargetProbes,
};
use seqmia_core::corpus::{build_vocab, deduplicate, DomainLabel, PairKey, SentencePair, Side, Tier};
use seqmia_core::features::{FeatureOptions, ProbeRecord};
use seqmia_core::rng::derive_seed;
use seqmia_core::splitter::{
    make_carol_splits, make_shadow_splits, shadow_manifest, shadow_splits_from_manifest, verify_shadow_splits,
    verify_splits, CorpusSplits, ShadowManifest, ShadowSplit, SplitManifest,
};
use seqmia_core::translator::{MemorizingConfig, Oracle, OracleSpec, SyntheticTranslator};

use crate::cache::TranslationCache;
use crate::config::RunConfig;
use crate::corpus_io::{read_corpus_tsv, read_parallel, write_corpus_tsv};
use crate::error::{Result, ToolError};
use crate::files::{file_digest, read_json, sha256_hex, to_json, write_atomic, write_json};
use crate::model_io::save_model;
use crate::oracles::{Backend, CachedOracle, FileCacheOracle, HttpOracle, HttpSettings};
use crate::report::{
    feature_csv, render_group, render_sentence, split_summary, sweep_csv, GroupReportFile, SentenceReportFile,
    GROUP_REPORT_FORMAT, SENTENCE_REPORT_FORMAT,
};
use crate::run::{RunDir, RunManifest};

pub const CORPUS_FILE: &str = "corpus.tsv";
pub const SPLIT_MANIFEST_FILE: &str = "splits/carol.json";
pub const SHADOW_MANIFEST_FILE: &str = "splits/shadow.json";
pub const SPLIT_SUMMARY_FILE: &str = "splits/summary.txt";
pub const SENTENCE_REPORT_FILE: &str = "reports/sentence.json";
pub const SENTENCE_TABLE_FILE: &str = "reports/sentence.txt";
pub const GROUP_REPORT_FILE: &str = "reports/group.json";
pub const GROUP_TABLE_FILE: &str = "reports/group.txt";
pub const HELDOUT_DOMAIN: &str = "heldout";

const GROUP_SAMPLING_NOTE: &str =
    "training groups are drawn uniformly from all attack-train shadow records of one label, across subcorpora";

/// What `translate` should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranslateSet {
    All,
    /// One of the target-side split sets (`a_in`, `a_out`, `a_ood`, `spare`).
    Target(&'static str),
    Shadow,
    Heldout,
}

impl TranslateSet {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "all" => TranslateSet::All,
            "a_in" => TranslateSet::Target("a_in"),
            "a_out" => TranslateSet::Target("a_out"),
            "a_ood" => TranslateSet::Target("a_ood"),
            "spare" => TranslateSet::Target("spare"),
            "shadow" => TranslateSet::Shadow,
            "heldout" => TranslateSet::Heldout,
            _ => return None,
        })
    }
}

/// Pairs requested from and sent to each oracle in one invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslateSummary {
    pub requested: BTreeMap<String, u64>,
    pub backend_calls: BTreeMap<String, u64>,
}

impl TranslateSummary {
    pub fn total_calls(&self) -> u64 {
        self.backend_calls.values().sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, n) in &self.requested {
            let calls = self.backend_calls.get(id).copied().unwrap_or(0);
            out.push_str(&format!("{id}: {n} pairs, {calls} sent to the oracle\n"));
        }
        out
    }
}

struct State {
    splits: CorpusSplits,
    shadow: Vec<ShadowSplit>,
    split_digest: String,
    shadow_digest: String,
}

/// Translated, tagged probe records of every shadow split and the target.
pub struct ProbeSet {
    pub shadow: Vec<ShadowRecords>,
    pub target: TargetProbes,
}

fn short_hash(s: &str) -> String {
    sha256_hex(s.as_bytes())[..12].to_string()
}

fn fingerprint(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{0}").as_bytes())
}

fn keys(pairs: &[SentencePair]) -> BTreeSet<PairKey> {
    pairs.iter().map(SentencePair::key).collect()
}

fn check_oracle_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\', '\t', '\n']) || id.starts_with('.') {
        return Err(ToolError::Config(format!(
            "oracle id {id:?} cannot be used as a file name"
        )));
    }
    Ok(())
}

/// `domain, index, score_name, value` lines.
pub fn read_external_scores(path: &Path) -> Result<BTreeMap<PairKey, BTreeMap<String, f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    let mut out: BTreeMap<PairKey, BTreeMap<String, f64>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [domain, index, name, value] = cols[..] else {
            return Err(ToolError::parse(
                path,
                i + 1,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        };
        let index: u32 = index
            .parse()
            .map_err(|_| ToolError::parse(path, i + 1, format!("bad index {index:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| ToolError::parse(path, i + 1, format!("bad value {value:?}")))?;
        out.entry(PairKey::new(domain, index))
            .or_default()
            .insert(name.to_string(), value);
    }
    Ok(out)
}

pub struct Pipeline {
    cfg: RunConfig,
    run: RunDir,
    state: Option<State>,
}

impl Pipeline {
    /// Takes ownership of the configured output directory.
    pub fn open(cfg: RunConfig) -> Result<Self> {
        let mut run = RunDir::open(&cfg.output_dir)?;
        run.manifest.config = Some(cfg.clone());
        run.manifest.config_digest = cfg.digest();
        Ok(Pipeline { cfg, run, state: None })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.run.manifest
    }

    pub fn run_dir(&self) -> &Path {
        self.run.root()
    }

    fn split_fingerprint(&self) -> Result<String> {
        let mut parts = vec![
            String::from_utf8_lossy(&to_json(&self.cfg.corpus)).into_owned(),
            String::from_utf8_lossy(&to_json(&self.cfg.split)).into_owned(),
            self.cfg.seeds.split.to_string(),
            self.cfg.seeds.shadow.to_string(),
        ];
        for c in &self.cfg.corpus {
            parts.push(file_digest(&c.source)?);
            parts.push(file_digest(&c.reference)?);
        }
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        Ok(fingerprint(&refs))
    }

    fn translate_fingerprint(&self) -> Result<String> {
        let rates = self.cfg.shadow_rates()?;
        let heldout = self.heldout_digest()?;
        Ok(fingerprint(&[
            &self.split_fingerprint()?,
            &String::from_utf8_lossy(&to_json(&self.cfg.target)),
            &format!("{}|{}", rates.memorization, rates.noise),
            &heldout,
        ]))
    }

    fn features_fingerprint(&self) -> Result<String> {
        let ext = match &self.cfg.features.external_score_file {
            Some(p) => file_digest(p)?,
            None => String::new(),
        };
        Ok(fingerprint(&[
            &self.translate_fingerprint()?,
            &String::from_utf8_lossy(&to_json(&self.cfg.features)),
            &ext,
        ]))
    }

    fn heldout_digest(&self) -> Result<String> {
        match &self.cfg.group.heldout {
            Some(h) => Ok(format!("{}|{}", file_digest(&h.source)?, file_digest(&h.reference)?)),
            None => Ok(String::new()),
        }
    }

    /// Deduplicates the corpus and builds the target and shadow splits.
    /// Returns the size summary.
    pub fn split(&mut self) -> Result<String> {
        let fp = self.split_fingerprint()?;
        if self.run.stage_done("split", &fp) {
            self.load_state()?;
            let p = self.run.path(SPLIT_SUMMARY_FILE);
            return std::fs::read_to_string(&p).map_err(|e| ToolError::io(&p, e));
        }
        let t0 = Instant::now();
        let mut pairs = Vec::new();
        for c in &self.cfg.corpus {
            pairs.extend(read_parallel(&c.source, &c.reference, &c.label())?);
        }
        let (corpus, stats) = deduplicate(pairs);
        let s = &self.cfg.split;
        let splits = make_carol_splits(&corpus, s.k, s.hold_spare_probe, self.cfg.seeds.split)?;
        let shadow = make_shadow_splits(&splits.b_all, s.shadow_groups, s.k_prime, self.cfg.seeds.shadow)?;
        let mut violations = verify_splits(&splits);
        violations.extend(verify_shadow_splits(&shadow, s.k_prime));
        if let Some(v) = violations.first() {
            return Err(ToolError::Internal(format!(
                "split invariant {} broken: {} ({} violations)",
                v.invariant,
                v.detail,
                violations.len()
            )));
        }
        let summary = split_summary(&splits, &stats, |d| self.cfg.tier_of(d));
        write_corpus_tsv(&self.run.path(CORPUS_FILE), &corpus)?;
        write_json(&self.run.path(SPLIT_MANIFEST_FILE), &splits.manifest())?;
        write_json(
            &self.run.path(SHADOW_MANIFEST_FILE),
            &shadow_manifest(&shadow, s.shadow_groups, s.k_prime, self.cfg.seeds.shadow),
        )?;
        write_atomic(&self.run.path(SPLIT_SUMMARY_FILE), summary.as_bytes())?;
        let outputs: Vec<String> = [
            CORPUS_FILE,
            SPLIT_MANIFEST_FILE,
            SHADOW_MANIFEST_FILE,
            SPLIT_SUMMARY_FILE,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        self.run
            .finish_stage("split", &fp, outputs, t0.elapsed().as_secs_f64())?;
        self.state = None;
        self.load_state()?;
        let st = self.state.as_ref().expect("state just loaded");
        let (a, b) = (st.split_digest.clone(), st.shadow_digest.clone());
        self.run.manifest.split_manifests.insert(SPLIT_MANIFEST_FILE.into(), a);
        self.run.manifest.split_manifests.insert(SHADOW_MANIFEST_FILE.into(), b);
        self.run.save()?;
        Ok(summary)
    }

    fn load_state(&mut self) -> Result<()> {
        if self.state.is_some() {
            return Ok(());
        }
        let corpus_path = self.run.path(CORPUS_FILE);
        let split_path = self.run.path(SPLIT_MANIFEST_FILE);
        let shadow_path = self.run.path(SHADOW_MANIFEST_FILE);
        let corpus = read_corpus_tsv(&corpus_path, |d| self.cfg.tier_of(d))?;
        let m: SplitManifest = read_json(&split_path)?;
        let splits = CorpusSplits::from_manifest(&m, &corpus)?;
        let sm: ShadowManifest = read_json(&shadow_path)?;
        let shadow = shadow_splits_from_manifest(&sm, &splits.b_all)?;
        self.state = Some(State {
            splits,
            shadow,
            split_digest: file_digest(&split_path)?,
            shadow_digest: file_digest(&shadow_path)?,
        });
        Ok(())
    }

    fn ensure_split(&mut self) -> Result<()> {
        self.split()?;
        Ok(())
    }

    fn state(&self) -> &State {
        self.state.as_ref().expect("split stage ran")
    }

    fn open_cached(&self, id: &str, backend: Backend) -> Result<CachedOracle> {
        check_oracle_id(id)?;
        let cache = TranslationCache::open(&self.run.path(&format!("cache/{id}.tsv")), id)?;
        Ok(CachedOracle::new(backend, cache))
    }

    fn target_oracle(&self) -> Result<CachedOracle> {
        let st = self.state();
        match &self.cfg.target {
            OracleSpec::Synthetic {
                memorization,
                noise,
                seed,
            } => {
                let seed = seed.unwrap_or(0);
                let id = format!(
                    "target-synthetic-{}",
                    short_hash(&format!("{memorization}|{noise}|{seed}|{}", st.split_digest))
                );
                let config = MemorizingConfig::new(keys(&st.splits.a_train), *memorization, *noise, seed)?;
                let vocab = build_vocab(&st.splits.a_train, Side::Reference);
                let backend = Backend::Synthetic(SyntheticTranslator::new(id.clone(), config, &vocab));
                self.open_cached(&id, backend)
            }
            OracleSpec::FileCache { path, id } => {
                let f = FileCacheOracle::load(Path::new(path), id.as_deref())?;
                let id = f.id().to_string();
                self.open_cached(&id, Backend::File(f))
            }
            OracleSpec::HttpApi {
                endpoint,
                auth_env,
                batch_size,
                requests_per_second,
                max_in_flight,
                max_retries,
                id,
            } => {
                let token = match auth_env {
                    Some(var) => Some(
                        std::env::var(var)
                            .map_err(|_| ToolError::Config(format!("environment variable {var} is not set")))?,
                    ),
                    None => None,
                };
                let id = id.clone().unwrap_or_else(|| "target-http".to_string());
                let mut settings = HttpSettings::new(endpoint.clone());
                settings.token = token;
                settings.batch_size = *batch_size;
                settings.requests_per_second = *requests_per_second;
                settings.max_in_flight = *max_in_flight;
                settings.max_retries = *max_retries;
                let backend = Backend::Http(HttpOracle::new(id.clone(), settings)?);
                self.open_cached(&id, backend)
            }
        }
    }

    /// The synthetic shadow model of one split, trained on its `b_train`.
    fn shadow_oracle(&self, split: &ShadowSplit) -> Result<CachedOracle> {
        let st = self.state();
        let rates = self.cfg.shadow_rates()?;
        let name = split.id.to_string();
        let bytes = derive_seed(self.cfg.seeds.shadow, "shadow-oracle", &[name.as_bytes()]);
        let seed = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let id = format!(
            "shadow-{name}-{}",
            short_hash(&format!(
                "{}|{}|{seed}|{}",
                rates.memorization, rates.noise, st.shadow_digest
            ))
        );
        let config = MemorizingConfig::new(keys(&split.b_train), rates.memorization, rates.noise, seed)?;
        let vocab = build_vocab(&split.b_train, Side::Reference);
        self.open_cached(
            &id,
            Backend::Synthetic(SyntheticTranslator::new(id.clone(), config, &vocab)),
        )
    }

    fn heldout_pairs(&self) -> Result<Vec<SentencePair>> {
        let Some(h) = &self.cfg.group.heldout else {
            return Ok(Vec::new());
        };
        let pairs = read_parallel(&h.source, &h.reference, &DomainLabel::new(HELDOUT_DOMAIN, Tier::Ood))?;
        let st = self.state();
        let probe_text: BTreeSet<(&[_], &[_])> = [&st.splits.a_in, &st.splits.a_out, &st.splits.a_ood]
            .into_iter()
            .flatten()
            .chain(st.shadow.iter().flat_map(|s| s.b_in.iter()))
            .map(|p| (p.source.as_slice(), p.reference.as_slice()))
            .collect();
        if let Some(p) = pairs
            .iter()
            .find(|p| probe_text.contains(&(p.source.as_slice(), p.reference.as_slice())))
        {
            return Err(ToolError::Config(format!(
                "held-out line {} also appears among the probes",
                p.index
            )));
        }
        Ok(pairs)
    }

    fn count(
        &mut self,
        stage: &str,
        summary: &mut TranslateSummary,
        oracle: &CachedOracle,
        requested: usize,
        before: u64,
    ) {
        let id = oracle.id().to_string();
        let sent = oracle.calls() - before;
        *summary.requested.entry(id.clone()).or_insert(0) += requested as u64;
        *summary.backend_calls.entry(id.clone()).or_insert(0) += sent;
        self.run.add_calls(stage, &id, sent);
    }

    /// Fills the translation caches for `set`.
    pub fn translate(&mut self, set: TranslateSet) -> Result<TranslateSummary> {
        self.ensure_split()?;
        let fp = self.translate_fingerprint()?;
        if set == TranslateSet::All && self.run.stage_done("translate", &fp) {
            return Ok(TranslateSummary::default());
        }
        let t0 = Instant::now();
        let mut summary = TranslateSummary::default();
        let mut touched = BTreeSet::new();
        let target_sets: Vec<&'static str> = match set {
            TranslateSet::All => {
                let mut v = vec!["a_in", "a_out", "a_ood"];
                if self.cfg.split.hold_spare_probe {
                    v.push("spare");
                }
                v
            }
            TranslateSet::Target(s) => vec![s],
            _ => Vec::new(),
        };
        let want_heldout = matches!(set, TranslateSet::All | TranslateSet::Heldout) && self.cfg.group.heldout.is_some();
        if !target_sets.is_empty() || want_heldout {
            let mut target = self.target_oracle()?;
            for name in target_sets {
                let pairs = self.state().splits.set(name).unwrap_or_default().to_vec();
                let before = target.calls();
                target.translate_batch(&pairs)?;
                self.count("translate", &mut summary, &target, pairs.len(), before);
            }
            if want_heldout {
                let pairs = self.heldout_pairs()?;
                let before = target.calls();
                target.translate_batch(&pairs)?;
                self.count("translate", &mut summary, &target, pairs.len(), before);
            }
            touched.insert(target.cache().path().to_path_buf());
        }
        let shadow_heldout = want_heldout && self.cfg.group.heldout.as_ref().is_some_and(|h| h.shadow_bleu.is_none());
        if matches!(set, TranslateSet::All | TranslateSet::Shadow) || shadow_heldout {
            let heldout = if shadow_heldout {
                self.heldout_pairs()?
            } else {
                Vec::new()
            };
            let splits: Vec<ShadowSplit> = self.state().shadow.clone();
            for s in &splits {
                let mut oracle = self.shadow_oracle(s)?;
                if set != TranslateSet::Heldout {
                    let mut probes = s.b_in.clone();
                    probes.extend_from_slice(&s.b_out);
                    let before = oracle.calls();
                    oracle.translate_batch(&probes)?;
                    self.count("translate", &mut summary, &oracle, probes.len(), before);
                }
                if !heldout.is_empty() {
                    let before = oracle.calls();
                    oracle.translate_batch(&heldout)?;
                    self.count("translate", &mut summary, &oracle, heldout.len(), before);
                }
                touched.insert(oracle.cache().path().to_path_buf());
            }
        }
        if set == TranslateSet::All {
            let root = self.run.root().to_path_buf();
            let outputs: Vec<String> = touched
                .iter()
                .filter_map(|p| p.strip_prefix(&root).ok())
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            self.run
                .finish_stage("translate", &fp, outputs, t0.elapsed().as_secs_f64())?;
        } else {
            self.run.save()?;
        }
        Ok(summary)
    }

    /// Probe records for every shadow split and the target, translated
    /// through the caches, with OOV flags and external scores attached.
    fn records(&mut self, stage: &str) -> Result<ProbeSet> {
        self.translate(TranslateSet::All)?;
        let mut ignored = TranslateSummary::default();
        let splits: Vec<ShadowSplit> = self.state().shadow.clone();
        let mut shadow = Vec::with_capacity(splits.len());
        for s in &splits {
            let mut oracle = self.shadow_oracle(s)?;
            let records = translate_probes(&mut oracle, &s.b_in, &s.b_out)?;
            self.count(stage, &mut ignored, &oracle, records.len(), 0);
            shadow.push(ShadowRecords {
                id: s.id,
                role: s.role,
                records,
            });
        }
        let mut target_oracle = self.target_oracle()?;
        let st = self.state();
        let balanced = translate_probes(&mut target_oracle, &st.splits.a_in, &st.splits.a_out)?;
        let ood = translate_probes(&mut target_oracle, &[], &st.splits.a_ood)?;
        let mut target = TargetProbes { balanced, ood };
        let n = target.balanced.len() + target.ood.len();
        self.count(stage, &mut ignored, &target_oracle, n, 0);

        let st = self.state();
        let src_vocab = build_vocab(&st.splits.b_all, Side::Source);
        let ref_vocab = build_vocab(&st.splits.b_all, Side::Reference);
        let ext = match &self.cfg.features.external_score_file {
            Some(p) => read_external_scores(p)?,
            None => BTreeMap::new(),
        };
        let attach = |records: &mut Vec<ProbeRecord>| {
            tag_oov(records, &src_vocab, &ref_vocab);
            for r in records.iter_mut() {
                if let Some(scores) = ext.get(&r.pair.key()) {
                    r.external_scores = scores.clone();
                }
            }
        };
        for s in &mut shadow {
            attach(&mut s.records);
        }
        attach(&mut target.balanced);
        attach(&mut target.ood);
        Ok(ProbeSet { shadow, target })
    }

    /// Every probe record, translating whatever the caches lack.
    pub fn probe_set(&mut self) -> Result<ProbeSet> {
        self.ensure_split()?;
        self.records("probes")
    }

    pub fn feature_options(&self) -> FeatureOptions {
        self.options()
    }

    fn options(&self) -> FeatureOptions {
        self.cfg.features.options()
    }

    /// Writes one feature CSV per shadow split and for the target probes.
    pub fn features(&mut self) -> Result<Vec<String>> {
        self.ensure_split()?;
        let fp = self.features_fingerprint()?;
        if self.run.stage_done("features", &fp) {
            return Ok(self.run.manifest.stages["features"].outputs.clone());
        }
        let t0 = Instant::now();
        let records = self.records("features")?;
        let options = self.options();
        let schema = options.schema();
        let mut outputs = Vec::new();
        let mut dump = |name: String, recs: &[ProbeRecord], labelled: bool| -> Result<()> {
            let rows = probe_features(recs, &options)?;
            let keys: Vec<(String, u32)> = recs
                .iter()
                .map(|r| (r.pair.domain.name.clone(), r.pair.index))
                .collect();
            let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
            let csv = feature_csv(&schema, &keys, labelled.then_some(labels.as_slice()), &rows);
            write_atomic(&self.run.path(&name), csv.as_bytes())?;
            outputs.push(name);
            Ok(())
        };
        for s in &records.shadow {
            dump(format!("features/shadow_{}.csv", s.id), &s.records, true)?;
        }
        dump("features/target.csv".into(), &records.target.balanced, false)?;
        if !records.target.ood.is_empty() {
            dump("features/target_ood.csv".into(), &records.target.ood, false)?;
        }
        self.run
            .finish_stage("features", &fp, outputs.clone(), t0.elapsed().as_secs_f64())?;
        Ok(outputs)
    }

    /// Sentence-level attack: trains every configured classifier on the
    /// shadow probes and evaluates on Bob's splits and the target probes.
    pub fn attack(&mut self) -> Result<SentenceReportFile> {
        self.ensure_split()?;
        let fp = fingerprint(&[
            &self.features_fingerprint()?,
            &String::from_utf8_lossy(&to_json(&self.cfg.classifier_specs())),
        ]);
        if self.run.stage_done("attack", &fp) {
            return read_json(&self.run.path(SENTENCE_REPORT_FILE));
        }
        let t0 = Instant::now();
        let records = self.records("attack")?;
        let options = self.options();
        let specs = self.cfg.classifier_specs();
        let models = build_attack_classifier(&records.shadow, &specs, &options)?;
        let mut outputs = Vec::new();
        for m in &models {
            let rel = format!("models/{}.json", kind_name(m.kind()));
            save_model(&self.run.path(&rel), m)?;
            outputs.push(rel);
        }
        let reports = evaluate_sentence_attack(&models, &records.shadow, &records.target, &options)?;
        let file = SentenceReportFile {
            format: SENTENCE_REPORT_FORMAT.to_string(),
            feature_columns: options.schema().columns,
            reports: reports.into_iter().flatten().collect(),
        };
        write_json(&self.run.path(SENTENCE_REPORT_FILE), &file)?;
        write_atomic(&self.run.path(SENTENCE_TABLE_FILE), render_sentence(&file).as_bytes())?;
        outputs.push(SENTENCE_REPORT_FILE.into());
        outputs.push(SENTENCE_TABLE_FILE.into());
        self.run
            .finish_stage("attack", &fp, outputs, t0.elapsed().as_secs_f64())?;
        Ok(file)
    }

    fn bleu_gap(&mut self) -> Result<f64> {
        if let Some(d) = self.cfg.group.delta_bleu {
            return Ok(d);
        }
        let Some(h) = self.cfg.group.heldout.clone() else {
            return Ok(0.0);
        };
        let heldout = self.heldout_pairs()?;
        let mut target = self.target_oracle()?;
        let mut ignored = TranslateSummary::default();
        let gap = match h.shadow_bleu {
            Some(v) => bleu_gap_from_value(&mut target, v, &heldout)?,
            None => {
                let splits: Vec<ShadowSplit> = self.state().shadow.clone();
                let mut shadows = splits
                    .iter()
                    .map(|s| self.shadow_oracle(s))
                    .collect::<Result<Vec<_>>>()?;
                let gap = measure_bleu_gap(&mut target, &mut shadows, &heldout)?;
                for s in &shadows {
                    self.count("group-attack", &mut ignored, s, heldout.len(), 0);
                }
                gap
            }
        };
        self.count("group-attack", &mut ignored, &target, heldout.len(), 0);
        self.run.manifest.bleu_gap = Some(gap);
        Ok(gap)
    }

    /// Group attack with threshold sweeps.
    pub fn group_attack(&mut self) -> Result<GroupReportFile> {
        self.ensure_split()?;
        let g = self.cfg.group.clone();
        let fp = fingerprint(&[
            &self.features_fingerprint()?,
            &String::from_utf8_lossy(&to_json(&self.cfg.classifier_specs())),
            &String::from_utf8_lossy(&to_json(&g)),
            &self.cfg.seeds.group.to_string(),
        ]);
        if self.run.stage_done("group-attack", &fp) {
            return read_json(&self.run.path(GROUP_REPORT_FILE));
        }
        let t0 = Instant::now();
        let records = self.records("group-attack")?;
        let delta = self.bleu_gap()?;
        let options = GroupOptions {
            group_size: g.size,
            n_groups: g.n_groups,
            delta_bleu: delta,
            sweep_step: g.sweep_step,
            seed: self.cfg.seeds.group,
        };
        let results = group_attack(
            &records.shadow,
            &records.target.balanced,
            &self.cfg.classifier_specs(),
            &options,
        )?;
        let file = GroupReportFile {
            format: GROUP_REPORT_FORMAT.to_string(),
            group_size: g.size,
            n_groups: g.n_groups,
            delta_bleu: delta,
            sampling: GROUP_SAMPLING_NOTE.to_string(),
            results,
        };
        let mut outputs = Vec::new();
        for r in &file.results {
            let rel = format!("reports/sweep_{}.csv", kind_name(r.classifier));
            write_atomic(&self.run.path(&rel), sweep_csv(&r.sweep).as_bytes())?;
            outputs.push(rel);
        }
        write_json(&self.run.path(GROUP_REPORT_FILE), &file)?;
        write_atomic(&self.run.path(GROUP_TABLE_FILE), render_group(&file).as_bytes())?;
        outputs.push(GROUP_REPORT_FILE.into());
        outputs.push(GROUP_TABLE_FILE.into());
        if !self.run.manifest.notes.iter().any(|n| n == GROUP_SAMPLING_NOTE) {
            self.run.manifest.notes.push(GROUP_SAMPLING_NOTE.to_string());
        }
        self.run
            .finish_stage("group-attack", &fp, outputs, t0.elapsed().as_secs_f64())?;
        Ok(file)
    }

    /// Re-renders whichever reports exist.
    pub fn report(&self) -> Result<String> {
        let mut out = String::new();
        let sentence = self.run.path(SENTENCE_REPORT_FILE);
        let group = self.run.path(GROUP_REPORT_FILE);
        if sentence.exists() {
            let f: SentenceReportFile = read_json(&sentence)?;
            let text = render_sentence(&f);
            write_atomic(&self.run.path(SENTENCE_TABLE_FILE), text.as_bytes())?;
            out.push_str(&text);
        }
        if group.exists() {
            let f: GroupReportFile = read_json(&group)?;
            let text = render_group(&f);
            write_atomic(&self.run.path(GROUP_TABLE_FILE), text.as_bytes())?;
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&text);
        }
        if out.is_empty() {
            return Err(ToolError::io(
                &sentence,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no reports yet; run attack or group-attack",
                ),
            ));
        }
        Ok(out)
    }
}

/// File-name form of a classifier kind.
pub fn kind_name(kind: seqmia_core::classifiers::ClassifierKind) -> &'static str {
    use seqmia_core::classifiers::ClassifierKind::*;
    match kind {
        Perceptron => "perceptron",
        DecisionTree => "decision_tree",
        GaussianNb => "gaussian_nb",
        Knn => "knn",
        Mlp => "mlp",
    }
}
