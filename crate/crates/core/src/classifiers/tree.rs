//! CART decision tree with GINI impurity.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Prediction, TrainingSet};
use crate::features::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 5,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    Leaf {
        n_in: usize,
        n_out: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_in: usize,
        n_out: usize,
    },
}

/// Nodes are stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// GINI impurity times node size: `n - (a^2 + b^2) / n`.
fn weighted_gini(n_in: usize, n_out: usize) -> f64 {
    let n = (n_in + n_out) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (n_in as f64, n_out as f64);
    n - (a * a + b * b) / n
}

struct Best {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl DecisionTree {
    pub fn fit(params: &TreeParams, data: &TrainingSet<'_>) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new() };
        let all: Vec<usize> = (0..data.rows.len()).collect();
        tree.grow(params, data, all, 0);
        tree
    }

    fn grow(&mut self, params: &TreeParams, data: &TrainingSet<'_>, idx: Vec<usize>, depth: usize) -> usize {
        let n_in = idx.iter().filter(|&&i| data.labels[i] == Label::In).count();
        let n_out = idx.len() - n_in;
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { n_in, n_out });
        if depth >= params.max_depth || idx.len() < params.min_samples_split.max(2) || n_in == 0 || n_out == 0 {
            return me;
        }
        let Some(best) = best_split(data, &idx, n_in, n_out) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| data.rows[i][best.feature] <= best.threshold);
        let left = self.grow(params, data, l, depth + 1);
        let right = self.grow(params, data, r, depth + 1);
        self.nodes[me] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            n_in,
            n_out,
        };
        me
    }

    fn leaf_for(&self, row: &[f64]) -> (usize, usize) {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { n_in, n_out } => return (n_in, n_out),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf in-fraction; `In` iff above 0.5.
    pub fn predict(&self, row: &[f64]) -> Prediction {
        let (n_in, n_out) = self.leaf_for(row);
        let total = n_in + n_out;
        let score = if total == 0 { 0.0 } else { n_in as f64 / total as f64 };
        Prediction::thresholded(score, 0.5)
    }
}

/// Exhaustive search over midpoints between consecutive distinct values.
/// Only strict improvements over the parent count; the first best split in
/// (feature, threshold) order wins ties.
fn best_split(data: &TrainingSet<'_>, idx: &[usize], n_in: usize, n_out: usize) -> Option<Best> {
    let parent = weighted_gini(n_in, n_out);
    let mut best: Option<Best> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
    for feature in 0..data.schema.len() {
        sorted.clear();
        sorted.extend(
            idx.iter()
                .map(|&i| (data.rows[i][feature], data.labels[i] == Label::In)),
        );
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut left_in, mut left_out) = (0usize, 0usize);
        for w in 0..sorted.len() - 1 {
            if sorted[w].1 {
                left_in += 1;
            } else {
                left_out += 1;
            }
            let (v, next) = (sorted[w].0, sorted[w + 1].0);
            if v == next {
                continue;
            }
            let impurity = weighted_gini(left_in, left_out) + weighted_gini(n_in - left_in, n_out - left_out);
            let bar = best.as_ref().map_or(parent, |b| b.impurity);
            if impurity < bar {
                best = Some(Best {
                    feature,
                    threshold: v + (next - v) / 2.0,
                    impurity,
                });
            }
        }
    }
    best
}
