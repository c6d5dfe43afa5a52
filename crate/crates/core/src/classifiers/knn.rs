//! k-nearest neighbours under a Minkowski distance.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Prediction, TrainingSet};
use crate::features::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    /// Minkowski order.
    pub p: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5, p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knn {
    pub k: usize,
    pub p: f64,
    pub points: Vec<Vec<f64>>,
    pub is_in: Vec<bool>,
}

impl Knn {
    pub fn fit(params: &KnnParams, data: &TrainingSet<'_>) -> Result<Self> {
        if params.k == 0 {
            return Err(Error::invalid("kNN needs k >= 1"));
        }
        if params.p.is_nan() || params.p < 1.0 {
            return Err(Error::invalid("Minkowski order must be >= 1"));
        }
        Ok(Knn {
            k: params.k,
            p: params.p,
            points: data.rows.to_vec(),
            is_in: data.labels.iter().map(|l| *l == Label::In).collect(),
        })
    }

    /// `sum |a - b|^p`, a monotone transform of the Minkowski distance.
    fn pow_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.p == 2.0 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        } else if self.p == 1.0 {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
        } else {
            a.iter().zip(b).map(|(x, y)| libm::pow((x - y).abs(), self.p)).sum()
        }
    }

    /// Indices of the k nearest training points, distance ties broken by
    /// training index.
    pub fn neighbours(&self, row: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.pow_distance(p, row), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of in-labelled neighbours; `In` iff above 0.5.
    pub fn predict(&self, row: &[f64]) -> Prediction {
        let nn = self.neighbours(row);
        let n_in = nn.iter().filter(|&&i| self.is_in[i]).count();
        Prediction::thresholded(n_in as f64 / nn.len() as f64, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::schema;
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn three_of_five() {
        let s = schema(1);
        let rows: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 0.3, 0.4, 5.0, 6.0].iter().map(|v| vec![*v]).collect();
        let labels = [
            Label::In,
            Label::Out,
            Label::In,
            Label::Out,
            Label::In,
            Label::Out,
            Label::Out,
        ];
        let m = Knn::fit(&KnnParams::default(), &TrainingSet::new(&s, &rows, &labels)).unwrap();
        let p = m.predict(&[0.2]);
        assert_eq!(p.score, 0.6);
        assert_eq!(p.label, Label::In);
    }

    #[test]
    fn distance_ties_use_training_order() {
        let s = schema(1);
        let rows: Vec<Vec<f64>> = vec![vec![1.0]; 8];
        let labels = [
            Label::Out,
            Label::Out,
            Label::Out,
            Label::In,
            Label::In,
            Label::In,
            Label::In,
            Label::In,
        ];
        let m = Knn::fit(&KnnParams::default(), &TrainingSet::new(&s, &rows, &labels)).unwrap();
        assert_eq!(m.neighbours(&[1.0]), vec![0, 1, 2, 3, 4]);
        assert_eq!(m.predict(&[1.0]).score, 0.4);
    }

    #[test]
    fn manhattan_order() {
        let s = schema(2);
        let rows = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![2.0, 2.0]];
        let labels = [Label::In, Label::Out, Label::Out];
        let m = Knn::fit(&KnnParams { k: 1, p: 1.0 }, &TrainingSet::new(&s, &rows, &labels)).unwrap();
        // L1 puts (3,0) before (2,2); L2 would not
        assert_eq!(m.neighbours(&[3.0, 1.0]), vec![1]);
        assert!(Knn::fit(&KnnParams { k: 0, p: 2.0 }, &TrainingSet::new(&s, &rows, &labels)).is_err());
    }

    proptest! {
        #[test]
        fn duplicating_training_set_keeps_labels(
            pts in prop::collection::vec((0i32..1000, 0i32..1000, any::<bool>()), 12..40),
            queries in prop::collection::vec((0i32..1000, 0i32..1000), 1..20),
        ) {
            let s = schema(2);
            let rows: Vec<Vec<f64>> = pts.iter().map(|(a, b, _)| vec![*a as f64 / 7.0, *b as f64 / 3.0]).collect();
            let labels: Vec<Label> = pts.iter().map(|p| if p.2 { Label::In } else { Label::Out }).collect();
            let mut rows2 = rows.clone();
            rows2.extend(rows.iter().cloned());
            let mut labels2 = labels.clone();
            labels2.extend(labels.iter().copied());
            let one = Knn::fit(&KnnParams::default(), &TrainingSet::new(&s, &rows, &labels)).unwrap();
            let two = Knn::fit(&KnnParams::default(), &TrainingSet::new(&s, &rows2, &labels2)).unwrap();
            for (a, b) in queries {
                let q = [a as f64 / 7.0, b as f64 / 3.0];
                let mut d: Vec<f64> = rows.iter().map(|r| one.pow_distance(r, &q)).collect();
                d.sort_by(f64::total_cmp);
                // after doubling, the 5 nearest are the 3 nearest originals
                // (two of them twice); untied when the 3rd is strictly closer
                // than the 4th
                if d[2] < d[3] {
                    let near3 = rows.iter().zip(&labels).filter(|(r, _)| one.pow_distance(r, &q) <= d[2]).filter(|(_, l)| **l == Label::In).count();
                    prop_assert_eq!(two.predict(&q).label == Label::In, near3 >= 2);
                }
            }
        }
    }
}
