//! Binary membership classifiers: averaged perceptron, CART decision tree,
//! Gaussian naive Bayes, k-nearest neighbours and a one-hidden-layer MLP.
//!
//! Every model maps a feature row to a [`Prediction`] whose score grows with
//! "in"-ness. Margin-style scores (perceptron, naive Bayes) are thresholded
//! at 0, probability-style scores (tree, kNN, MLP) at 0.5, and an exact tie
//! always resolves to [`Label::Out`].

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureSchema, Label};
use crate::{Error, Result};

pub mod knn;
pub mod mlp;
pub mod naive_bayes;
pub mod perceptron;
pub mod tree;

/// Bumped whenever the serialized layout of [`TrainedModel`] changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Perceptron,
    DecisionTree,
    GaussianNb,
    Knn,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Perceptron,
        ClassifierKind::DecisionTree,
        ClassifierKind::GaussianNb,
        ClassifierKind::Knn,
        ClassifierKind::Mlp,
    ];

    /// Short row label used in report tables.
    pub fn abbrev(self) -> &'static str {
        match self {
            ClassifierKind::Perceptron => "P",
            ClassifierKind::DecisionTree => "DT",
            ClassifierKind::GaussianNb => "NB",
            ClassifierKind::Knn => "NN",
            ClassifierKind::Mlp => "MLP",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hyperparameters {
    Perceptron(perceptron::PerceptronParams),
    DecisionTree(tree::TreeParams),
    GaussianNb(naive_bayes::NbParams),
    Knn(knn::KnnParams),
    Mlp(mlp::MlpParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Perceptron => Hyperparameters::Perceptron(Default::default()),
            ClassifierKind::DecisionTree => Hyperparameters::DecisionTree(Default::default()),
            ClassifierKind::GaussianNb => Hyperparameters::GaussianNb(Default::default()),
            ClassifierKind::Knn => Hyperparameters::Knn(Default::default()),
            ClassifierKind::Mlp => Hyperparameters::Mlp(Default::default()),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparameters::Perceptron(_) => ClassifierKind::Perceptron,
            Hyperparameters::DecisionTree(_) => ClassifierKind::DecisionTree,
            Hyperparameters::GaussianNb(_) => ClassifierKind::GaussianNb,
            Hyperparameters::Knn(_) => ClassifierKind::Knn,
            Hyperparameters::Mlp(_) => ClassifierKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub params: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec {
            params: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Larger means more in-like.
    pub score: f64,
}

impl Prediction {
    /// `In` iff `score > threshold`.
    pub fn thresholded(score: f64, threshold: f64) -> Self {
        Prediction {
            label: if score > threshold { Label::In } else { Label::Out },
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelParams {
    Perceptron(perceptron::Perceptron),
    DecisionTree(tree::DecisionTree),
    GaussianNb(naive_bayes::GaussianNb),
    Knn(knn::Knn),
    Mlp(mlp::Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub rows: usize,
    pub rows_in: usize,
    pub rows_out: usize,
    pub train_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub schema: FeatureSchema,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

/// Anything that scores label-free feature rows.
pub trait Classifier {
    fn schema(&self) -> &FeatureSchema;

    fn predict_row(&self, row: &[f64]) -> Result<Prediction>;

    /// Checks `schema` once, then predicts every row.
    fn predict_batch(&self, schema: &FeatureSchema, rows: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        self.schema().check(schema)?;
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        self.spec.kind()
    }
}

impl Classifier for TrainedModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn predict_row(&self, row: &[f64]) -> Result<Prediction> {
        if row.len() != self.schema.len() {
            return Err(Error::SchemaMismatch {
                missing: Vec::new(),
                extra: alloc::vec![format!(
                    "row has {} values, model expects {}",
                    row.len(),
                    self.schema.len()
                )],
            });
        }
        Ok(match &self.params {
            ModelParams::Perceptron(m) => m.predict(row),
            ModelParams::DecisionTree(m) => m.predict(row),
            ModelParams::GaussianNb(m) => m.predict(row),
            ModelParams::Knn(m) => m.predict(row),
            ModelParams::Mlp(m) => m.predict(row),
        })
    }
}

/// Labelled training rows. Labels live only here, never in prediction input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<'a> {
    pub schema: &'a FeatureSchema,
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [Label],
}

impl<'a> TrainingSet<'a> {
    pub fn new(schema: &'a FeatureSchema, rows: &'a [Vec<f64>], labels: &'a [Label]) -> Self {
        TrainingSet { schema, rows, labels }
    }

    fn validate(&self) -> Result<()> {
        if self.rows.len() != self.labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                self.rows.len(),
                self.labels.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.schema.len() {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, schema has {}",
                    r.len(),
                    self.schema.len()
                )));
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "row {i} has a non-finite value in column {}",
                    self.schema.columns[j]
                )));
            }
        }
        let n_in = self.labels.iter().filter(|l| **l == Label::In).count();
        if n_in == 0 || n_in == self.labels.len() {
            return Err(Error::invalid("training data needs both in and out examples"));
        }
        Ok(())
    }
}

pub(crate) fn sign(label: Label) -> f64 {
    match label {
        Label::In => 1.0,
        Label::Out => -1.0,
    }
}

/// Trains one classifier. `validation` is used by kinds that early-stop
/// (the MLP); others ignore it.
pub fn train(
    spec: &ClassifierSpec,
    data: &TrainingSet<'_>,
    validation: Option<&TrainingSet<'_>>,
) -> Result<TrainedModel> {
    data.validate()?;
    if let Some(v) = validation {
        data.schema.check(v.schema)?;
        if v.rows.is_empty() {
            return Err(Error::invalid("validation set is empty"));
        }
    }
    let params = match &spec.params {
        Hyperparameters::Perceptron(p) => ModelParams::Perceptron(perceptron::Perceptron::fit(p, data, spec.seed)),
        Hyperparameters::DecisionTree(p) => ModelParams::DecisionTree(tree::DecisionTree::fit(p, data)),
        Hyperparameters::GaussianNb(p) => ModelParams::GaussianNb(naive_bayes::GaussianNb::fit(p, data)),
        Hyperparameters::Knn(p) => ModelParams::Knn(knn::Knn::fit(p, data)?),
        Hyperparameters::Mlp(p) => ModelParams::Mlp(mlp::Mlp::fit(p, data, validation, spec.seed)?),
    };
    let mut model = TrainedModel {
        spec: spec.clone(),
        schema: data.schema.clone(),
        params,
        metadata: TrainingMetadata {
            rows: data.rows.len(),
            rows_in: data.labels.iter().filter(|l| **l == Label::In).count(),
            rows_out: data.labels.iter().filter(|l| **l == Label::Out).count(),
            train_accuracy: 0.0,
            seed: spec.seed,
        },
    };
    let correct = data
        .rows
        .iter()
        .zip(data.labels)
        .filter(|(r, l)| model.predict_row(r).map(|p| p.label == **l).unwrap_or(false))
        .count();
    model.metadata.train_accuracy = correct as f64 / data.rows.len() as f64;
    Ok(model)
}

/// Shortcut building a spec with default hyperparameters.
pub fn train_default(kind: ClassifierKind, seed: u64, data: &TrainingSet<'_>) -> Result<TrainedModel> {
    train(&ClassifierSpec::new(kind, seed), data, None)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
