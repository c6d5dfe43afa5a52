//! One-hidden-layer perceptron (ReLU hidden units, logistic output) trained
//! with Adam on L2-regularised cross-entropy, with early stopping on a
//! held-out set.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Prediction, TrainingSet};
use crate::features::Label;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    /// L2 penalty.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Share of the training rows held out for early stopping when no
    /// validation set is given.
    pub validation_fraction: f64,
    pub patience: usize,
    /// Minimum validation-accuracy gain that resets patience.
    pub tol: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 100,
            alpha: 1e-4,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            validation_fraction: 0.1,
            patience: 10,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    /// Row-major `hidden x inputs`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub epochs_run: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::B1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(Self::B2, f64::from(self.t));
        let lr_t = lr * libm::sqrt(c2) / c1;
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grads[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grads[i] * grads[i];
            params[i] -= lr_t * self.m[i] / (libm::sqrt(self.v[i]) + Self::EPS);
        }
    }
}

impl Mlp {
    fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "classifier/mlp/init", &[]);
        let b1 = libm::sqrt(6.0 / inputs as f64);
        let b2 = libm::sqrt(6.0 / hidden as f64);
        Mlp {
            inputs,
            hidden,
            w1: (0..inputs * hidden).map(|_| r.random_range(-b1..b1)).collect(),
            b1: (0..hidden).map(|_| r.random_range(-b1..b1)).collect(),
            w2: (0..hidden).map(|_| r.random_range(-b2..b2)).collect(),
            b2: r.random_range(-b2..b2),
            epochs_run: 0,
        }
    }

    fn forward(&self, row: &[f64], h: &mut [f64]) -> f64 {
        let mut z = self.b2;
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            let a = self.b1[j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            *hj = a.max(0.0);
            z += self.w2[j] * *hj;
        }
        z
    }

    pub fn fit(
        params: &MlpParams,
        data: &TrainingSet<'_>,
        validation: Option<&TrainingSet<'_>>,
        seed: u64,
    ) -> Result<Self> {
        if params.hidden == 0 || params.batch_size == 0 {
            return Err(Error::invalid("MLP needs hidden units and a positive batch size"));
        }
        let mut order: Vec<usize> = (0..data.rows.len()).collect();
        let mut r = rng::stream(seed, "classifier/mlp/order", &[]);
        order.shuffle(&mut r);

        // held-out shard: (rows, labels) as index lists into `data` or the
        // external validation set
        let (train_idx, own_val): (Vec<usize>, Vec<usize>) = match validation {
            Some(_) => (order.clone(), Vec::new()),
            None => {
                let n_val = (data.rows.len() as f64 * params.validation_fraction) as usize;
                if n_val == 0 || n_val == data.rows.len() {
                    (order.clone(), Vec::new())
                } else {
                    (order[n_val..].to_vec(), order[..n_val].to_vec())
                }
            }
        };
        let val_rows: Vec<(&[f64], Label)> = match validation {
            Some(v) => v.rows.iter().map(Vec::as_slice).zip(v.labels.iter().copied()).collect(),
            None => own_val
                .iter()
                .map(|&i| (data.rows[i].as_slice(), data.labels[i]))
                .collect(),
        };

        let d = data.schema.len();
        let hid = params.hidden;
        let mut net = Mlp::init(d, hid, seed);
        let mut adam_w1 = Adam::new(d * hid);
        let mut adam_b1 = Adam::new(hid);
        let mut adam_w2 = Adam::new(hid);
        let mut adam_b2 = Adam::new(1);
        let mut g_w1 = vec![0.0; d * hid];
        let mut g_b1 = vec![0.0; hid];
        let mut g_w2 = vec![0.0; hid];
        let mut h = vec![0.0; hid];
        let mut train_idx = train_idx;

        let mut best = net.clone();
        let mut best_acc = f64::NEG_INFINITY;
        let mut stale = 0usize;

        for epoch in 0..params.max_epochs {
            train_idx.shuffle(&mut r);
            for batch in train_idx.chunks(params.batch_size) {
                g_w1.iter_mut().for_each(|g| *g = 0.0);
                g_b1.iter_mut().for_each(|g| *g = 0.0);
                g_w2.iter_mut().for_each(|g| *g = 0.0);
                let mut g_b2 = 0.0;
                let bs = batch.len() as f64;
                for &i in batch {
                    let x = &data.rows[i];
                    let y = if data.labels[i] == Label::In { 1.0 } else { 0.0 };
                    let out = sigmoid(net.forward(x, &mut h));
                    let dz = (out - y) / bs;
                    g_b2 += dz;
                    for j in 0..hid {
                        if h[j] <= 0.0 {
                            continue;
                        }
                        g_w2[j] += dz * h[j];
                        let dh = dz * net.w2[j];
                        g_b1[j] += dh;
                        let row = &mut g_w1[j * d..(j + 1) * d];
                        for (g, xv) in row.iter_mut().zip(x.iter()) {
                            *g += dh * xv;
                        }
                    }
                }
                for (g, w) in g_w1.iter_mut().zip(&net.w1) {
                    *g += params.alpha * w / bs;
                }
                for (g, w) in g_w2.iter_mut().zip(&net.w2) {
                    *g += params.alpha * w / bs;
                }
                adam_w1.step(&mut net.w1, &g_w1, params.learning_rate);
                adam_b1.step(&mut net.b1, &g_b1, params.learning_rate);
                adam_w2.step(&mut net.w2, &g_w2, params.learning_rate);
                let mut b2 = [net.b2];
                adam_b2.step(&mut b2, &[g_b2], params.learning_rate);
                net.b2 = b2[0];
            }
            net.epochs_run = epoch + 1;
            if val_rows.is_empty() {
                best = net.clone();
                continue;
            }
            let correct = val_rows.iter().filter(|(x, l)| net.predict(x).label == *l).count();
            let acc = correct as f64 / val_rows.len() as f64;
            if acc > best_acc + params.tol {
                best_acc = acc;
                best = net.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= params.patience {
                    break;
                }
            }
        }
        best.epochs_run = net.epochs_run;
        Ok(best)
    }

    /// Logistic output; `In` iff above 0.5.
    pub fn predict(&self, row: &[f64]) -> Prediction {
        let mut h = vec![0.0; self.hidden];
        Prediction::thresholded(sigmoid(self.forward(row, &mut h)), 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{schema, separable};
    use super::*;

    #[test]
    fn learns_a_linear_boundary() {
        let s = schema(2);
        let (rows, labels) = separable(400, 2);
        let m = Mlp::fit(&MlpParams::default(), &TrainingSet::new(&s, &rows, &labels), None, 3).unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, l)| m.predict(r).label == **l)
            .count();
        assert!(correct as f64 / 400.0 > 0.95, "{correct}");
    }

    #[test]
    fn learns_xor() {
        let s = schema(2);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            rows.push(vec![a, b]);
            labels.push(if (a + b) as i32 == 1 { Label::In } else { Label::Out });
        }
        let params = MlpParams {
            learning_rate: 1e-2,
            ..Default::default()
        };
        let m = Mlp::fit(&params, &TrainingSet::new(&s, &rows, &labels), None, 1).unwrap();
        for (r, l) in rows.iter().zip(&labels).take(4) {
            assert_eq!(m.predict(r).label, *l);
        }
    }

    #[test]
    fn external_validation_is_used() {
        let s = schema(2);
        let (rows, labels) = separable(200, 4);
        let (vrows, vlabels) = separable(50, 5);
        let v = TrainingSet::new(&s, &vrows, &vlabels);
        let m = Mlp::fit(
            &MlpParams::default(),
            &TrainingSet::new(&s, &rows, &labels),
            Some(&v),
            9,
        )
        .unwrap();
        assert!(m.epochs_run >= 1 && m.epochs_run <= 200);
        let bad = MlpParams {
            hidden: 0,
            ..Default::default()
        };
        assert!(Mlp::fit(&bad, &TrainingSet::new(&s, &rows, &labels), None, 9).is_err());
    }
}
