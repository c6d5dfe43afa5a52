//! Averaged perceptron with a bias term.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{dot, sign, Prediction, TrainingSet};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptronParams {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for PerceptronParams {
    fn default() -> Self {
        PerceptronParams {
            epochs: 100,
            learning_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perceptron {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Perceptron {
    /// Classic mistake-driven updates with the example order reshuffled every
    /// epoch; the returned weights are the average over all steps.
    pub fn fit(params: &PerceptronParams, data: &TrainingSet<'_>, seed: u64) -> Self {
        let d = data.schema.len();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut sum_w = vec![0.0; d];
        let mut sum_b = 0.0;
        let mut steps = 0u64;
        let mut order: Vec<usize> = (0..data.rows.len()).collect();
        let mut r = rng::stream(seed, "classifier/perceptron", &[]);
        for _ in 0..params.epochs {
            order.shuffle(&mut r);
            for &i in &order {
                let x = &data.rows[i];
                let y = sign(data.labels[i]);
                if y * (dot(&w, x) + b) <= 0.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += params.learning_rate * y * xj;
                    }
                    b += params.learning_rate * y;
                }
                for (s, wj) in sum_w.iter_mut().zip(&w) {
                    *s += wj;
                }
                sum_b += b;
                steps += 1;
            }
        }
        if steps == 0 {
            return Perceptron { weights: w, bias: b };
        }
        let n = steps as f64;
        Perceptron {
            weights: sum_w.into_iter().map(|s| s / n).collect(),
            bias: sum_b / n,
        }
    }

    /// Signed margin; `In` iff strictly positive.
    pub fn predict(&self, row: &[f64]) -> Prediction {
        Prediction::thresholded(dot(&self.weights, row) + self.bias, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{schema, separable};
    use super::*;
    use crate::features::Label;

    #[test]
    fn separable_data_is_learned_exactly() {
        let s = schema(2);
        let (rows, labels) = separable(200, 7);
        let m = Perceptron::fit(&PerceptronParams::default(), &TrainingSet::new(&s, &rows, &labels), 1);
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict(r).label, *l);
        }
    }

    #[test]
    fn zero_weights_tie_to_out() {
        let m = Perceptron {
            weights: vec![0.0, 0.0],
            bias: 0.0,
        };
        let p = m.predict(&[3.0, -1.0]);
        assert_eq!(p.score, 0.0);
        assert_eq!(p.label, Label::Out);
    }
}
