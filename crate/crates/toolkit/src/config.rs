//! Run configuration.
//!
//! A single TOML file describes a run: corpus files, split geometry, the
//! target oracle, shadow oracle parameters, features, classifiers, the group
//! attack, and every seed. Unknown keys are rejected, `--set a.b=value`
//! overrides any key, and [`RunConfig::validate`] checks everything before
//! work starts. Relative paths resolve against the config file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqmia_core::classifiers::{ClassifierKind, ClassifierSpec, Hyperparameters};
use seqmia_core::corpus::{DomainLabel, Tier};
use seqmia_core::features::FeatureOptions;
use seqmia_core::splitter::{DEFAULT_K, DEFAULT_SHADOW_GROUPS};
use seqmia_core::translator::OracleSpec;

use crate::error::{Result, ToolError};
use crate::files::{sha256_hex, to_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seeds: Seeds,
    pub corpus: Vec<CorpusEntry>,
    #[serde(default)]
    pub split: SplitConfig,
    /// Alice's oracle.
    pub target: OracleSpec,
    #[serde(default)]
    pub shadow: ShadowConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<Hyperparameters>,
    #[serde(default)]
    pub group: GroupConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_classifiers() -> Vec<Hyperparameters> {
    ClassifierKind::ALL
        .iter()
        .map(|k| Hyperparameters::default_for(*k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub shadow: u64,
    pub classifier: u64,
    pub group: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 1,
            shadow: 2,
            classifier: 3,
            group: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub tier: Tier,
    pub source: PathBuf,
    pub reference: PathBuf,
}

impl CorpusEntry {
    pub fn label(&self) -> DomainLabel {
        DomainLabel::new(self.name.clone(), self.tier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub k: usize,
    pub hold_spare_probe: bool,
    pub shadow_groups: usize,
    pub k_prime: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            k: DEFAULT_K,
            hold_spare_probe: false,
            shadow_groups: DEFAULT_SHADOW_GROUPS,
            k_prime: DEFAULT_K,
        }
    }
}

/// Shadow models are synthetic translators trained on their split's
/// `b_train`. Unset rates copy a synthetic target's.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub memorization: Option<f64>,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub include_model_score: bool,
    pub external_scores: Vec<String>,
    /// TSV of `domain, index, score_name, value`.
    pub external_score_file: Option<PathBuf>,
}

impl FeatureConfig {
    pub fn options(&self) -> FeatureOptions {
        FeatureOptions {
            include_model_score: self.include_model_score,
            external_scores: self.external_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeldoutConfig {
    pub source: PathBuf,
    pub reference: PathBuf,
    /// Known shadow-model BLEU; when unset the shadow oracles are measured.
    #[serde(default)]
    pub shadow_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupConfig {
    pub size: usize,
    pub n_groups: usize,
    pub sweep_step: u32,
    /// Fixed target-minus-shadow BLEU gap.
    pub delta_bleu: Option<f64>,
    /// Measure the gap on these pairs instead.
    pub heldout: Option<HeldoutConfig>,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            size: 500,
            n_groups: 6000,
            sweep_step: 5,
            delta_bleu: None,
            heldout: None,
        }
    }
}

/// Rates of a shadow synthetic translator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRates {
    pub memorization: f64,
    pub noise: f64,
}

/// Sets `dotted.key` in `table`, creating intermediate tables. The value is
/// read as a TOML literal, or taken as a plain string if it is not one.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ToolError::Config(format!("override {assignment:?} is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ToolError::Config(format!("bad override key {key:?}")));
    }
    let mut at = table;
    for p in &parts[..parts.len() - 1] {
        let entry = at
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        at = entry
            .as_table_mut()
            .ok_or_else(|| ToolError::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    at.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ToolError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| ToolError::Config(e.to_string()))
    }

    /// Reads, overrides, resolves paths and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        for c in &mut self.corpus {
            resolve(base, &mut c.source);
            resolve(base, &mut c.reference);
        }
        if let Some(f) = &mut self.features.external_score_file {
            resolve(base, f);
        }
        if let Some(h) = &mut self.group.heldout {
            resolve(base, &mut h.source);
            resolve(base, &mut h.reference);
        }
        if let OracleSpec::FileCache { path, .. } = &mut self.target {
            let mut p = PathBuf::from(&*path);
            resolve(base, &mut p);
            *path = p.to_string_lossy().into_owned();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ToolError::Config(m));
        if self.corpus.is_empty() {
            return bad("no [[corpus]] entries".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.corpus {
            if c.name.is_empty() || c.name.contains(['\t', ':', '\n']) || c.name.contains(char::is_whitespace) {
                return bad(format!(
                    "corpus name {:?} must be non-empty without spaces, tabs or ':'",
                    c.name
                ));
            }
            if c.name == crate::pipeline::HELDOUT_DOMAIN {
                return bad(format!("corpus name {:?} is reserved for the held-out set", c.name));
            }
            if !names.insert(c.name.as_str()) {
                return bad(format!("corpus {:?} listed twice", c.name));
            }
            for p in [&c.source, &c.reference] {
                if !p.is_file() {
                    return bad(format!("corpus {}: file {} not found", c.name, p.display()));
                }
            }
        }
        if !self.corpus.iter().any(|c| c.tier == Tier::Shared) {
            return bad("at least one corpus must have tier \"shared\"".into());
        }
        let s = &self.split;
        if s.k == 0 || s.k_prime == 0 || s.shadow_groups == 0 {
            return bad("split.k, split.k_prime and split.shadow_groups must be positive".into());
        }
        match &self.target {
            OracleSpec::Synthetic {
                memorization, noise, ..
            } => check_rates("target", *memorization, *noise)?,
            OracleSpec::HttpApi {
                auth_env,
                batch_size,
                max_in_flight,
                requests_per_second,
                ..
            } => {
                if *batch_size == 0
                    || *max_in_flight == 0
                    || requests_per_second.is_nan()
                    || *requests_per_second <= 0.0
                {
                    return bad("target: batch_size, max_in_flight and requests_per_second must be positive".into());
                }
                if let Some(var) = auth_env {
                    if std::env::var_os(var).is_none() {
                        return bad(format!("target: environment variable {var} is not set"));
                    }
                }
            }
            OracleSpec::FileCache { path, .. } => {
                if !Path::new(path).is_file() {
                    return bad(format!("target: translation file {path} not found"));
                }
            }
        }
        let rates = self.shadow_rates()?;
        check_rates("shadow", rates.memorization, rates.noise)?;
        if self.classifiers.is_empty() {
            return bad("no classifiers configured".into());
        }
        let mut kinds = BTreeSet::new();
        for c in &self.classifiers {
            if !kinds.insert(c.kind()) {
                return bad(format!("classifier {} listed twice", c.kind()));
            }
        }
        let f = &self.features;
        if !f.external_scores.is_empty() && f.external_score_file.is_none() {
            return bad("features.external_scores needs features.external_score_file".into());
        }
        if let Some(p) = &f.external_score_file {
            if !p.is_file() {
                return bad(format!("external score file {} not found", p.display()));
            }
        }
        let g = &self.group;
        if g.size == 0 || g.n_groups == 0 {
            return bad("group.size and group.n_groups must be positive".into());
        }
        if g.sweep_step == 0 || 100 % g.sweep_step != 0 {
            return bad(format!("group.sweep_step {} must divide 100", g.sweep_step));
        }
        if g.delta_bleu.is_some() && g.heldout.is_some() {
            return bad("set either group.delta_bleu or group.heldout, not both".into());
        }
        if let Some(h) = &g.heldout {
            for p in [&h.source, &h.reference] {
                if !p.is_file() {
                    return bad(format!("held-out file {} not found", p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn shadow_rates(&self) -> Result<SyntheticRates> {
        let (m, q) = match &self.target {
            OracleSpec::Synthetic {
                memorization, noise, ..
            } => (Some(*memorization), Some(*noise)),
            _ => (None, None),
        };
        match (self.shadow.memorization.or(m), self.shadow.noise.or(q)) {
            (Some(memorization), Some(noise)) => Ok(SyntheticRates { memorization, noise }),
            _ => Err(ToolError::Config(
                "shadow.memorization and shadow.noise are required when the target is not synthetic".into(),
            )),
        }
    }

    pub fn tier_of(&self, domain: &str) -> Option<Tier> {
        self.corpus.iter().find(|c| c.name == domain).map(|c| c.tier)
    }

    pub fn classifier_specs(&self) -> Vec<ClassifierSpec> {
        self.classifiers
            .iter()
            .map(|p| ClassifierSpec {
                params: p.clone(),
                seed: self.seeds.classifier,
            })
            .collect()
    }

    /// Digest of everything that shapes results (the output directory
    /// excluded).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(&to_json(&c))
    }
}

fn check_rates(who: &str, m: f64, q: f64) -> Result<()> {
    for (name, v) in [("memorization", m), ("noise", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ToolError::Config(format!("{who}.{name} = {v} is outside [0, 1]")));
        }
    }
    Ok(())
}
