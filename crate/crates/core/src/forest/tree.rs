//! CART classification trees over sparse features.
//!
//! Absent features are exact zeros and take part in threshold search like any
//! other value. Samples go left when `x[feature] <= threshold`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestConfig, ForestError};
use crate::features::SparseVector;

/// Gini impurity `1 - sum(p_i^2)`.
pub fn gini(class_counts: &[f64]) -> Result<f64, ForestError> {
    if class_counts.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(ForestError::InvalidCounts);
    }
    let total: f64 = class_counts.iter().sum();
    if total <= 0.0 {
        return Err(ForestError::InvalidCounts);
    }
    Ok(1.0 - class_counts.iter().map(|c| (c / total).powi(2)).sum::<f64>())
}

fn gini2(c0: f64, c1: f64) -> f64 {
    let total = c0 + c1;
    if total <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c0 / total, c1 / total);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Probabilities of class 0 and class 1.
        proba: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dimension: usize,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_proba(&self, x: &SparseVector) -> [f64; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { proba } => return *proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Class vote of this tree; a 50/50 leaf votes 0.
    pub fn vote(&self, x: &SparseVector) -> u8 {
        u8::from(self.leaf_proba(x)[1] > 0.5)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Column-major copy of the training matrix, shared by all trees of a forest.
pub(crate) struct TrainingSet<'a> {
    pub rows: &'a [SparseVector],
    pub labels: &'a [u8],
    pub dimension: usize,
    columns: Vec<Vec<(u32, f64)>>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(rows: &'a [SparseVector], labels: &'a [u8]) -> Result<Self, ForestError> {
        if rows.len() != labels.len() {
            return Err(ForestError::LengthMismatch {
                samples: rows.len(),
                labels: labels.len(),
            });
        }
        if rows.is_empty() {
            return Err(ForestError::Empty);
        }
        if let Some(&bad) = labels.iter().find(|l| **l > 1) {
            return Err(ForestError::InvalidLabel(bad));
        }
        let dimension = rows[0].dimension();
        if let Some(r) = rows.iter().find(|r| r.dimension() != dimension) {
            return Err(ForestError::DimensionMismatch {
                expected: dimension,
                found: r.dimension(),
            });
        }
        let mut columns = vec![Vec::new(); dimension];
        for (s, row) in rows.iter().enumerate() {
            for &(f, v) in row.entries() {
                columns[f].push((s as u32, v));
            }
        }
        Ok(TrainingSet {
            rows,
            labels,
            dimension,
            columns,
        })
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'t, 'a, R> {
    data: &'t TrainingSet<'a>,
    weights: &'t [u32],
    config: &'t ForestConfig,
    max_features: usize,
    rng: R,
    stamp: Vec<u32>,
    next_stamp: u32,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, '_, R> {
    fn class_weights(&self, samples: &[u32]) -> (f64, f64) {
        let mut c = (0.0, 0.0);
        for &s in samples {
            let w = self.weights[s as usize] as f64;
            if self.data.labels[s as usize] == 1 {
                c.1 += w;
            } else {
                c.0 += w;
            }
        }
        c
    }

    fn leaf(&mut self, counts: (f64, f64)) -> usize {
        let total = counts.0 + counts.1;
        self.nodes.push(Node::Leaf {
            proba: [counts.0 / total, counts.1 / total],
        });
        self.nodes.len() - 1
    }

    /// Features that are non-zero for at least one node sample, ascending.
    fn present_features(&self, samples: &[u32]) -> Vec<usize> {
        let mut features: Vec<usize> = samples
            .iter()
            .flat_map(|&s| self.data.rows[s as usize].entries().iter().map(|(f, _)| *f))
            .collect();
        features.sort_unstable();
        features.dedup();
        features
    }

    fn best_threshold(
        &mut self,
        feature: usize,
        samples: &[u32],
        stamp: u32,
        counts: (f64, f64),
    ) -> Option<(f64, f64)> {
        // (value, weight of class 0, weight of class 1)
        let mut values: Vec<(f64, f64, f64)> = Vec::new();
        let column = &self.data.columns[feature];
        let mut push = |s: u32, v: f64| {
            let w = self.weights[s as usize] as f64;
            if self.data.labels[s as usize] == 1 {
                values.push((v, 0.0, w));
            } else {
                values.push((v, w, 0.0));
            }
        };
        if column.len() <= samples.len() {
            for &(s, v) in column {
                if self.stamp[s as usize] == stamp {
                    push(s, v);
                }
            }
        } else {
            for &s in samples {
                let v = self.data.rows[s as usize].get(feature);
                if v != 0.0 {
                    push(s, v);
                }
            }
        }
        let nonzero = values.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.1, acc.1 + v.2));
        let zero = (counts.0 - nonzero.0, counts.1 - nonzero.1);
        if zero.0 + zero.1 > 0.0 {
            values.push((0.0, zero.0, zero.1));
        }
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, f64, f64)> = Vec::with_capacity(values.len());
        for (v, w0, w1) in values {
            match groups.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 += w0;
                    last.2 += w1;
                }
                _ => groups.push((v, w0, w1)),
            }
        }
        if groups.len() < 2 {
            return None;
        }
        let total = counts.0 + counts.1;
        let parent = gini2(counts.0, counts.1);
        let mut left = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for pair in groups.windows(2) {
            left.0 += pair[0].1;
            left.1 += pair[0].2;
            let right = (counts.0 - left.0, counts.1 - left.1);
            let wl = left.0 + left.1;
            let wr = right.0 + right.1;
            let child = (wl * gini2(left.0, left.1) + wr * gini2(right.0, right.1)) / total;
            let decrease = (parent - child).max(0.0);
            let mut threshold = pair[0].0 + (pair[1].0 - pair[0].0) / 2.0;
            if threshold >= pair[1].0 {
                threshold = pair[0].0;
            }
            if best.is_none_or(|(d, _)| decrease > d) {
                best = Some((decrease, threshold));
            }
        }
        best.map(|(d, t)| (t, d))
    }

    fn build(&mut self, samples: Vec<u32>, depth: usize) -> usize {
        let counts = self.class_weights(&samples);
        let total = counts.0 + counts.1;
        let pure = counts.0 == 0.0 || counts.1 == 0.0;
        let depth_reached = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || total < self.config.min_samples_split as f64 {
            return self.leaf(counts);
        }

        let stamp = self.next_stamp;
        self.next_stamp += 1;
        for &s in &samples {
            self.stamp[s as usize] = stamp;
        }

        let mut features = self.present_features(&samples);
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        let mut drawn = 0;
        while evaluated < self.max_features && drawn < features.len() {
            let pick = self.rng.random_range(drawn..features.len());
            features.swap(drawn, pick);
            let feature = features[drawn];
            drawn += 1;
            let Some((threshold, decrease)) =
                self.best_threshold(feature, &samples, stamp, counts)
            else {
                // constant within the node; does not count toward the budget
                continue;
            };
            evaluated += 1;
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    decrease,
                });
            }
        }

        let Some(best) = best else {
            return self.leaf(counts);
        };
        let (left, right): (Vec<u32>, Vec<u32>) = samples.into_iter().partition(|&s| {
            self.data.rows[s as usize].get(best.feature) <= best.threshold
        });
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        if let Node::Split { left, right, .. } = &mut self.nodes[at] {
            *left = l;
            *right = r;
        }
        at
    }
}

pub(crate) fn grow<R: Rng>(
    data: &TrainingSet<'_>,
    weights: &[u32],
    config: &ForestConfig,
    rng: R,
) -> DecisionTree {
    let samples: Vec<u32> = (0..data.rows.len() as u32)
        .filter(|&s| weights[s as usize] > 0)
        .collect();
    let mut builder = Builder {
        data,
        weights,
        config,
        max_features: config.features_per_split.resolve(data.dimension),
        rng,
        stamp: vec![0; data.rows.len()],
        next_stamp: 1,
        nodes: Vec::new(),
    };
    builder.build(samples, 0);
    DecisionTree {
        dimension: data.dimension,
        nodes: builder.nodes,
    }
}

/// Trains one tree on every sample with unit weight.
pub fn train_tree<R: Rng>(
    x: &[SparseVector],
    y: &[u8],
    config: &ForestConfig,
    rng: R,
) -> Result<DecisionTree, ForestError> {
    let data = TrainingSet::new(x, y)?;
    config.check()?;
    let weights = vec![1u32; x.len()];
    Ok(grow(&data, &weights, config, rng))
}
