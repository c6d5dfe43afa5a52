//! Gaussian naive Bayes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Prediction, TrainingSet};
use crate::features::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    /// Fraction of the largest feature variance added to every variance.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams { var_smoothing: 1e-9 }
    }
}

/// Smallest variance ever used, for data where every feature is constant.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassStats {
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNb {
    pub class_in: ClassStats,
    pub class_out: ClassStats,
}

fn moments(rows: &[&Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

impl GaussianNb {
    pub fn fit(params: &NbParams, data: &TrainingSet<'_>) -> Self {
        let d = data.schema.len();
        let all: Vec<&Vec<f64>> = data.rows.iter().collect();
        let (_, total_var) = moments(&all, d);
        let max_var = total_var.iter().copied().fold(0.0, f64::max);
        let epsilon = (params.var_smoothing * max_var).max(VARIANCE_FLOOR);
        let class = |label: Label| {
            let rows: Vec<&Vec<f64>> = data
                .rows
                .iter()
                .zip(data.labels)
                .filter(|(_, l)| **l == label)
                .map(|(r, _)| r)
                .collect();
            let (mean, mut var) = moments(&rows, d);
            var.iter_mut().for_each(|v| *v += epsilon);
            ClassStats {
                log_prior: libm::log(rows.len() as f64 / data.rows.len() as f64),
                mean,
                var,
            }
        };
        GaussianNb {
            class_in: class(Label::In),
            class_out: class(Label::Out),
        }
    }

    fn joint_log_likelihood(c: &ClassStats, row: &[f64]) -> f64 {
        let mut ll = c.log_prior;
        for ((x, m), v) in row.iter().zip(&c.mean).zip(&c.var) {
            ll -= 0.5 * libm::log(2.0 * PI * v) + (x - m) * (x - m) / (2.0 * v);
        }
        ll
    }

    /// Log-posterior difference `log P(in|x) - log P(out|x)`.
    pub fn predict(&self, row: &[f64]) -> Prediction {
        let score = Self::joint_log_likelihood(&self.class_in, row) - Self::joint_log_likelihood(&self.class_out, row);
        Prediction::thresholded(score, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::schema;
    use super::*;
    use rand::Rng;

    // Box-Muller
    fn normal(r: &mut impl Rng, mean: f64, sd: f64) -> f64 {
        let u1: f64 = 1.0 - r.random::<f64>();
        let u2: f64 = r.random();
        mean + sd * libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }

    #[test]
    fn separated_gaussians() {
        let s = schema(1);
        let mut r = crate::rng::stream(5, "test/nb", &[]);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2000 {
            let label = if i % 2 == 0 { Label::In } else { Label::Out };
            let mean = if label == Label::In { 0.0 } else { 10.0 };
            rows.push(vec![normal(&mut r, mean, 1.0)]);
            labels.push(label);
        }
        let (train_rows, test_rows) = rows.split_at(1000);
        let (train_labels, test_labels) = labels.split_at(1000);
        let m = GaussianNb::fit(&NbParams::default(), &TrainingSet::new(&s, train_rows, train_labels));
        let correct = test_rows
            .iter()
            .zip(test_labels)
            .filter(|(x, l)| m.predict(x).label == **l)
            .count();
        assert!(correct as f64 / 1000.0 > 0.99);
    }

    #[test]
    fn constant_features_stay_finite() {
        let s = schema(2);
        let rows = vec![vec![1.0, 3.0], vec![1.0, 3.0], vec![1.0, 3.0]];
        let labels = vec![Label::In, Label::Out, Label::Out];
        let m = GaussianNb::fit(&NbParams::default(), &TrainingSet::new(&s, &rows, &labels));
        let p = m.predict(&[1.0, 3.0]);
        assert!(p.score.is_finite());
        assert_eq!(p.label, Label::Out);
        assert!(m.predict(&[2.0, 3.0]).score.is_finite());
    }
}
