//! Axis-aligned decision trees and weighted ensembles of them.
//!
//! Trees route an input to a leaf by checking statements of the form
//! `x[feature] > threshold` at every internal node: true goes right, false
//! (`x[feature] <= threshold`) goes left. Ensembles combine tree outputs by
//! weighted averaging (regression) or weighted voting (classification).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinarizedDataset, Dataset, Targets};
use crate::error::{Error, Result};
use crate::util::{argmax, substream};
use crate::{OutputValue, Task};

/// Output stored on a leaf: a numeric value for regression trees, a class
/// probability vector for classification trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafValue {
    Scalar(f64),
    Probs(Vec<f64>),
}

impl LeafValue {
    /// The class a leaf votes for (argmax of its probability vector).
    pub fn vote(&self) -> Option<usize> {
        match self {
            LeafValue::Scalar(_) => None,
            LeafValue::Probs(p) => Some(argmax(p)),
        }
    }
}

/// One node of a decision tree; children are indices into the tree's node list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: LeafValue,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// A rooted binary decision tree stored as an indexed node list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: usize,
    pub nodes: Vec<TreeNode>,
}

/// Which side of a statement `x[feature] > threshold` a path took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `x[feature] > threshold`
    Greater,
    /// `x[feature] <= threshold`
    LessEq,
}

/// A statement together with the side taken, as collected along a
/// root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub feature: usize,
    pub threshold: f64,
    pub side: Side,
}

impl DecisionTree {
    /// Routes `x` to its leaf and returns the leaf's node id.
    pub fn apply_leaf(&self, x: &[f64]) -> usize {
        let mut id = self.root;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { .. } => return id,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] > *threshold { *right } else { *left };
                }
            }
        }
    }

    /// Routes `x` to its leaf and returns the leaf value.
    pub fn apply(&self, x: &[f64]) -> &LeafValue {
        match &self.nodes[self.apply_leaf(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Internal { .. } => unreachable!("apply_leaf returns a leaf"),
        }
    }

    /// Statements along the root-to-leaf path of `leaf`, in path order.
    ///
    /// An empty list means the leaf covers the whole input space.
    pub fn leaf_region(&self, leaf: usize) -> Result<Vec<Condition>> {
        if leaf >= self.nodes.len() {
            return Err(Error::InvalidEnsemble(format!(
                "leaf id {leaf} out of range ({} nodes)",
                self.nodes.len()
            )));
        }
        if !self.nodes[leaf].is_leaf() {
            return Err(Error::InvalidEnsemble(format!(
                "node {leaf} is an internal node, not a leaf"
            )));
        }
        let mut path = Vec::new();
        if self.walk_to(self.root, leaf, &mut path) {
            Ok(path)
        } else {
            Err(Error::InvalidEnsemble(format!(
                "leaf {leaf} is not reachable from root {}",
                self.root
            )))
        }
    }

    fn walk_to(&self, node: usize, target: usize, path: &mut Vec<Condition>) -> bool {
        if node == target {
            return true;
        }
        match &self.nodes[node] {
            TreeNode::Leaf { .. } => false,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                path.push(Condition {
                    feature: *feature,
                    threshold: *threshold,
                    side: Side::LessEq,
                });
                if self.walk_to(*left, target, path) {
                    return true;
                }
                path.pop();
                path.push(Condition {
                    feature: *feature,
                    threshold: *threshold,
                    side: Side::Greater,
                });
                if self.walk_to(*right, target, path) {
                    return true;
                }
                path.pop();
                false
            }
        }
    }

    /// Ids of all leaf nodes.
    pub fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }
}

/// A tree plus its ensemble weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub weight: f64,
    #[serde(flatten)]
    pub tree: DecisionTree,
}

/// A weighted set of decision trees over a common feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub task: Task,
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    pub trees: Vec<WeightedTree>,
}

impl TreeEnsemble {
    /// Checks every structural invariant; called by `load_ensemble`.
    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidEnsemble("ensemble has no trees".into()));
        }
        match self.task {
            Task::Classification => match self.n_classes {
                Some(c) if c >= 2 => {}
                Some(c) => {
                    return Err(Error::InvalidEnsemble(format!(
                        "classification requires n_classes >= 2, got {c}"
                    )))
                }
                None => {
                    return Err(Error::InvalidEnsemble(
                        "classification ensemble is missing n_classes".into(),
                    ))
                }
            },
            Task::Regression => {
                if self.n_classes.is_some() {
                    return Err(Error::InvalidEnsemble(
                        "regression ensemble must not set n_classes".into(),
                    ));
                }
            }
        }
        for (t, wt) in self.trees.iter().enumerate() {
            if !wt.weight.is_finite() {
                return Err(Error::InvalidEnsemble(format!(
                    "tree {t} has non-finite weight"
                )));
            }
            self.validate_tree(t, &wt.tree)?;
        }
        Ok(())
    }

    fn validate_tree(&self, t: usize, tree: &DecisionTree) -> Result<()> {
        let n = tree.nodes.len();
        if n == 0 {
            return Err(Error::InvalidEnsemble(format!("tree {t} has no nodes")));
        }
        if tree.root >= n {
            return Err(Error::InvalidEnsemble(format!(
                "tree {t}: root id {} out of range ({n} nodes)",
                tree.root
            )));
        }
        // Iterative DFS from the root: every node must be visited exactly once.
        let mut visited = vec![false; n];
        let mut stack = vec![tree.root];
        while let Some(id) = stack.pop() {
            if visited[id] {
                return Err(Error::InvalidEnsemble(format!(
                    "tree {t}: node {id} is reachable more than once"
                )));
            }
            visited[id] = true;
            match &tree.nodes[id] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.n_features {
                        return Err(Error::InvalidEnsemble(format!(
                            "tree {t}, node {id}: feature index {feature} >= n_features {}",
                            self.n_features
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::InvalidEnsemble(format!(
                            "tree {t}, node {id}: non-finite threshold"
                        )));
                    }
                    for child in [left, right] {
                        if *child >= n {
                            return Err(Error::InvalidEnsemble(format!(
                                "tree {t}, node {id}: dangling node reference {child}"
                            )));
                        }
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
                TreeNode::Leaf { value } => self.validate_leaf(t, id, value)?,
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(Error::InvalidEnsemble(format!(
                "tree {t}: node {orphan} is not reachable from the root"
            )));
        }
        Ok(())
    }

    fn validate_leaf(&self, t: usize, id: usize, value: &LeafValue) -> Result<()> {
        match (self.task, value) {
            (Task::Regression, LeafValue::Scalar(v)) => {
                if !v.is_finite() {
                    return Err(Error::InvalidEnsemble(format!(
                        "tree {t}, node {id}: non-finite leaf value"
                    )));
                }
            }
            (Task::Regression, LeafValue::Probs(_)) => {
                return Err(Error::InvalidEnsemble(format!(
                    "tree {t}, node {id}: regression leaf holds a vector"
                )));
            }
            (Task::Classification, LeafValue::Probs(p)) => {
                let c = self.n_classes.unwrap_or(0);
                if p.len() != c {
                    return Err(Error::InvalidEnsemble(format!(
                        "tree {t}, node {id}: leaf vector length {} != n_classes {c}",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidEnsemble(format!(
                        "tree {t}, node {id}: leaf probabilities must be finite and non-negative"
                    )));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidEnsemble(format!(
                        "tree {t}, node {id}: leaf probabilities sum to {s}, expected 1"
                    )));
                }
            }
            (Task::Classification, LeafValue::Scalar(_)) => {
                return Err(Error::InvalidEnsemble(format!(
                    "tree {t}, node {id}: classification leaf holds a scalar"
                )));
            }
        }
        Ok(())
    }

    /// Ensemble prediction: weighted average for regression, weighted hard
    /// voting (argmax of each tree's leaf vector) for classification.
    /// Vote ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> OutputValue {
        match self.task {
            Task::Regression => {
                let mut sum = 0.0;
                for wt in &self.trees {
                    match wt.tree.apply(x) {
                        LeafValue::Scalar(v) => sum += wt.weight * v,
                        LeafValue::Probs(_) => unreachable!("validated regression leaf"),
                    }
                }
                OutputValue::Value(sum)
            }
            Task::Classification => {
                let c = self.n_classes.unwrap_or(2);
                let mut votes = vec![0.0; c];
                for wt in &self.trees {
                    if let Some(class) = wt.tree.apply(x).vote() {
                        votes[class] += wt.weight;
                    }
                }
                OutputValue::Class(argmax(&votes))
            }
        }
    }

    /// Total number of internal nodes across all trees (the raw statement
    /// count before deduplication).
    pub fn internal_node_count(&self) -> usize {
        self.trees
            .iter()
            .map(|wt| wt.tree.nodes.iter().filter(|n| !n.is_leaf()).count())
            .sum()
    }

    /// Ensemble predictions over all rows of a dataset, shaped as fit targets.
    pub fn predict_targets(&self, data: &Dataset) -> Result<Targets> {
        if data.n_features() != self.n_features {
            return Err(Error::TaskMismatch(format!(
                "dataset has {} features but ensemble expects {}",
                data.n_features(),
                self.n_features
            )));
        }
        match self.task {
            Task::Regression => Ok(Targets::Regression(
                data.x
                    .iter()
                    .map(|row| self.predict(row).as_value().unwrap())
                    .collect(),
            )),
            Task::Classification => Ok(Targets::Classification {
                labels: data
                    .x
                    .iter()
                    .map(|row| self.predict(row).as_class().unwrap())
                    .collect(),
                n_classes: self.n_classes.unwrap(),
                class_names: match &data.targets {
                    Targets::Classification { class_names, .. }
                        if class_names.len() == self.n_classes.unwrap() =>
                    {
                        class_names.clone()
                    }
                    _ => (0..self.n_classes.unwrap()).map(|c| c.to_string()).collect(),
                },
            }),
        }
    }
}

/// Loads and validates an ensemble from the JSON interchange format.
pub fn load_ensemble(path: &Path) -> Result<TreeEnsemble> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ensemble: TreeEnsemble = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(path, e.to_string()))?;
    ensemble.validate()?;
    Ok(ensemble)
}

/// Writes an ensemble in the JSON interchange format. Numbers round-trip
/// 64-bit floats exactly.
pub fn save_ensemble(ensemble: &TreeEnsemble, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, ensemble).map_err(|e| Error::parse(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Number of distinct binary feature vectors observed in a binarized dataset:
/// how many ensemble cells the data actually touches.
pub fn count_empirical_regions(data: &BinarizedDataset) -> usize {
    let mut seen: HashSet<&[bool]> = HashSet::with_capacity(data.n_rows());
    for row in &data.rows {
        seen.insert(&row.bits);
    }
    seen.len()
}

/// Hyperparameters for `train_forest`.
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or below `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Fraction of features considered at each split, in (0, 1].
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 5,
            feature_subsample: 1.0,
            bootstrap: true,
        }
    }
}

/// Trains a bagged CART forest: greedy splits by variance reduction
/// (regression) or Gini impurity (classification), uniform weights `1/T`.
///
/// Deterministic given `seed`; each tree draws from its own RNG stream
/// derived from `(seed, tree index)`.
pub fn train_forest(data: &Dataset, params: &ForestParams, seed: u64) -> Result<TreeEnsemble> {
    if data.n_rows() == 0 {
        return Err(Error::Invalid("cannot train a forest on an empty dataset".into()));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Invalid("n_trees and min_leaf must be positive".into()));
    }
    if !(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0) {
        return Err(Error::Invalid("feature_subsample must be in (0, 1]".into()));
    }

    let weight = 1.0 / params.n_trees as f64;
    let trees: Vec<WeightedTree> = (0..params.n_trees)
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let indices: Vec<usize> = if params.bootstrap {
                (0..data.n_rows())
                    .map(|_| rng.gen_range(0..data.n_rows()))
                    .collect()
            } else {
                (0..data.n_rows()).collect()
            };
            let mut builder = TreeBuilder {
                data,
                params,
                rng,
                nodes: Vec::new(),
            };
            let root = builder.build(indices, 0);
            WeightedTree {
                weight,
                tree: DecisionTree {
                    root,
                    nodes: builder.nodes,
                },
            }
        })
        .collect();

    let ensemble = TreeEnsemble {
        task: data.task(),
        n_features: data.n_features(),
        n_classes: match &data.targets {
            Targets::Classification { n_classes, .. } => Some(*n_classes),
            Targets::Regression(_) => None,
        },
        trees,
    };
    ensemble.validate()?;
    Ok(ensemble)
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
        let split = if depth_ok && indices.len() >= 2 * self.params.min_leaf && !self.is_pure(&indices)
        {
            self.best_split(&indices)
        } else {
            None
        };
        match split {
            None => {
                self.nodes.push(TreeNode::Leaf {
                    value: self.leaf_value(&indices),
                });
                self.nodes.len() - 1
            }
            Some(split) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| self.data.x[i][split.feature] <= split.threshold);
                let left = self.build(left_idx, depth + 1);
                let right = self.build(right_idx, depth + 1);
                self.nodes.push(TreeNode::Internal {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                });
                self.nodes.len() - 1
            }
        }
    }

    fn is_pure(&self, indices: &[usize]) -> bool {
        match &self.data.targets {
            Targets::Regression(y) => {
                let first = y[indices[0]];
                indices.iter().all(|&i| y[i] == first)
            }
            Targets::Classification { labels, .. } => {
                let first = labels[indices[0]];
                indices.iter().all(|&i| labels[i] == first)
            }
        }
    }

    fn leaf_value(&self, indices: &[usize]) -> LeafValue {
        match &self.data.targets {
            Targets::Regression(y) => {
                let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64;
                LeafValue::Scalar(mean)
            }
            Targets::Classification {
                labels, n_classes, ..
            } => {
                let mut counts = vec![0.0; *n_classes];
                for &i in indices {
                    counts[labels[i]] += 1.0;
                }
                let n = indices.len() as f64;
                LeafValue::Probs(counts.into_iter().map(|c| c / n).collect())
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        let m = ((self.params.feature_subsample * d as f64).ceil() as usize).clamp(1, d);
        if m == d {
            return (0..d).collect();
        }
        // Partial Fisher-Yates, then sorted so split ties resolve by feature id.
        let mut pool: Vec<usize> = (0..d).collect();
        for i in 0..m {
            let j = self.rng.gen_range(i..d);
            pool.swap(i, j);
        }
        let mut chosen = pool[..m].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn best_split(&mut self, indices: &[usize]) -> Option<Split> {
        let features = self.candidate_features();
        let mut best: Option<Split> = None;
        for feature in features {
            if let Some(split) = self.best_split_on(indices, feature) {
                let better = match &best {
                    None => true,
                    Some(b) => split.score < b.score,
                };
                if better {
                    best = Some(split);
                }
            }
        }
        best
    }

    /// Best threshold on one feature, minimizing the children's summed
    /// squared error (regression) or sample-weighted Gini (classification).
    fn best_split_on(&self, indices: &[usize], feature: usize) -> Option<Split> {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| self.data.x[a][feature].total_cmp(&self.data.x[b][feature]));
        let n = order.len();
        let min_leaf = self.params.min_leaf;

        match &self.data.targets {
            Targets::Regression(y) => {
                let total_sum: f64 = order.iter().map(|&i| y[i]).sum();
                let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
                let mut left_sum = 0.0;
                let mut left_sq = 0.0;
                let mut best: Option<Split> = None;
                for pos in 0..n - 1 {
                    let i = order[pos];
                    left_sum += y[i];
                    left_sq += y[i] * y[i];
                    let nl = pos + 1;
                    let nr = n - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let lo = self.data.x[i][feature];
                    let hi = self.data.x[order[pos + 1]][feature];
                    if lo == hi {
                        continue;
                    }
                    let sse_left = left_sq - left_sum * left_sum / nl as f64;
                    let right_sum = total_sum - left_sum;
                    let sse_right = (total_sq - left_sq) - right_sum * right_sum / nr as f64;
                    let score = sse_left + sse_right;
                    if best.as_ref().map_or(true, |b| score < b.score) {
                        best = Some(Split {
                            feature,
                            threshold: 0.5 * (lo + hi),
                            score,
                        });
                    }
                }
                best
            }
            Targets::Classification {
                labels, n_classes, ..
            } => {
                let c = *n_classes;
                let mut total = vec![0.0f64; c];
                for &i in &order {
                    total[labels[i]] += 1.0;
                }
                let mut left = vec![0.0f64; c];
                let mut best: Option<Split> = None;
                for pos in 0..n - 1 {
                    let i = order[pos];
                    left[labels[i]] += 1.0;
                    let nl = (pos + 1) as f64;
                    let nr = (n - pos - 1) as f64;
                    if (pos + 1) < min_leaf || (n - pos - 1) < min_leaf {
                        continue;
                    }
                    let lo = self.data.x[i][feature];
                    let hi = self.data.x[order[pos + 1]][feature];
                    if lo == hi {
                        continue;
                    }
                    let gini = |counts: &[f64], m: f64| -> f64 {
                        1.0 - counts.iter().map(|&v| (v / m) * (v / m)).sum::<f64>()
                    };
                    let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                    let score = nl * gini(&left, nl) + nr * gini(&right, nr);
                    if best.as_ref().map_or(true, |b| score < b.score) {
                        best = Some(Split {
                            feature,
                            threshold: 0.5 * (lo + hi),
                            score,
                        });
                    }
                }
                best
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic1;
    use rand::Rng;

    fn leaf(v: f64) -> TreeNode {
        TreeNode::Leaf {
            value: LeafValue::Scalar(v),
        }
    }

    fn single_leaf_ensemble(v: f64) -> TreeEnsemble {
        TreeEnsemble {
            task: Task::Regression,
            n_features: 1,
            n_classes: None,
            trees: vec![WeightedTree {
                weight: 1.0,
                tree: DecisionTree {
                    root: 0,
                    nodes: vec![leaf(v)],
                },
            }],
        }
    }

    /// Left/right leaves around a single split at (feature 0, threshold 0.5).
    fn stump(left_v: f64, right_v: f64) -> DecisionTree {
        DecisionTree {
            root: 2,
            nodes: vec![
                leaf(left_v),
                leaf(right_v),
                TreeNode::Internal {
                    feature: 0,
                    threshold: 0.5,
                    left: 0,
                    right: 1,
                },
            ],
        }
    }

    #[test]
    fn single_leaf_predicts_everywhere() {
        let ens = single_leaf_ensemble(2.0);
        ens.validate().unwrap();
        assert_eq!(ens.predict(&[0.0]), OutputValue::Value(2.0));
        assert_eq!(ens.predict(&[123.0]), OutputValue::Value(2.0));
    }

    #[test]
    fn dangling_child_is_rejected() {
        let ens = TreeEnsemble {
            task: Task::Regression,
            n_features: 1,
            n_classes: None,
            trees: vec![WeightedTree {
                weight: 1.0,
                tree: DecisionTree {
                    root: 0,
                    nodes: vec![TreeNode::Internal {
                        feature: 0,
                        threshold: 0.5,
                        left: 1,
                        right: 7,
                    },
                    leaf(1.0)],
                },
            }],
        };
        let err = ens.validate().unwrap_err().to_string();
        assert!(err.contains("dangling node reference"), "{err}");
    }

    #[test]
    fn feature_out_of_range_is_rejected() {
        let mut ens = single_leaf_ensemble(1.0);
        ens.trees[0].tree = stump(1.0, 2.0);
        ens.n_features = 0;
        let err = ens.validate().unwrap_err().to_string();
        assert!(err.contains("feature index"), "{err}");
    }

    #[test]
    fn wrong_leaf_vector_length_is_rejected() {
        let ens = TreeEnsemble {
            task: Task::Classification,
            n_features: 1,
            n_classes: Some(3),
            trees: vec![WeightedTree {
                weight: 1.0,
                tree: DecisionTree {
                    root: 0,
                    nodes: vec![TreeNode::Leaf {
                        value: LeafValue::Probs(vec![0.5, 0.5]),
                    }],
                },
            }],
        };
        let err = ens.validate().unwrap_err().to_string();
        assert!(err.contains("leaf vector length"), "{err}");
    }

    #[test]
    fn stump_routes_strictly_greater_right() {
        let tree = stump(1.0, 3.0);
        assert_eq!(*tree.apply(&[0.7]), LeafValue::Scalar(3.0));
        assert_eq!(*tree.apply(&[0.5]), LeafValue::Scalar(1.0)); // boundary goes left
        assert_eq!(*tree.apply(&[0.2]), LeafValue::Scalar(1.0));
    }

    #[test]
    fn two_tree_average() {
        let ens = TreeEnsemble {
            task: Task::Regression,
            n_features: 1,
            n_classes: None,
            trees: vec![
                WeightedTree {
                    weight: 0.5,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![leaf(1.0)],
                    },
                },
                WeightedTree {
                    weight: 0.5,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![leaf(3.0)],
                    },
                },
            ],
        };
        assert_eq!(ens.predict(&[0.0]), OutputValue::Value(2.0));
    }

    #[test]
    fn classification_vote_tie_breaks_low() {
        let probs_leaf = |p: Vec<f64>| TreeNode::Leaf {
            value: LeafValue::Probs(p),
        };
        let ens = TreeEnsemble {
            task: Task::Classification,
            n_features: 1,
            n_classes: Some(2),
            trees: vec![
                WeightedTree {
                    weight: 1.0,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![probs_leaf(vec![1.0, 0.0])],
                    },
                },
                WeightedTree {
                    weight: 1.0,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![probs_leaf(vec![0.0, 1.0])],
                    },
                },
            ],
        };
        assert_eq!(ens.predict(&[0.0]), OutputValue::Class(0));
    }

    #[test]
    fn classification_prediction_invariant_under_weight_rescaling() {
        let probs_leaf = |p: Vec<f64>| TreeNode::Leaf {
            value: LeafValue::Probs(p),
        };
        let mk = |w: f64| TreeEnsemble {
            task: Task::Classification,
            n_features: 1,
            n_classes: Some(3),
            trees: vec![
                WeightedTree {
                    weight: w,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![probs_leaf(vec![0.2, 0.5, 0.3])],
                    },
                },
                WeightedTree {
                    weight: 2.0 * w,
                    tree: DecisionTree {
                        root: 0,
                        nodes: vec![probs_leaf(vec![0.6, 0.3, 0.1])],
                    },
                },
            ],
        };
        assert_eq!(mk(1.0).predict(&[0.0]), mk(17.5).predict(&[0.0]));
    }

    #[test]
    fn regression_prediction_linear_in_leaf_values() {
        let mk = |c: f64| TreeEnsemble {
            task: Task::Regression,
            n_features: 1,
            n_classes: None,
            trees: vec![WeightedTree {
                weight: 1.0,
                tree: stump(1.0 * c, 3.0 * c),
            }],
        };
        let base = mk(1.0).predict(&[0.9]).as_value().unwrap();
        let scaled = mk(4.0).predict(&[0.9]).as_value().unwrap();
        assert!((scaled - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn single_leaf_region_is_whole_space() {
        let tree = DecisionTree {
            root: 0,
            nodes: vec![leaf(5.0)],
        };
        assert!(tree.leaf_region(0).unwrap().is_empty());
    }

    #[test]
    fn leaf_region_on_internal_node_errors() {
        let tree = stump(1.0, 2.0);
        assert!(tree.leaf_region(2).is_err());
    }

    /// Path x1 > b1, x2 <= b2, x3 > b3, x3 <= b3'; the region is
    /// (b1, inf) x (-inf, b2] x (b3, b3'].
    #[test]
    fn leaf_region_collects_path_statements_in_order() {
        let (b1, b2, b3, b3p) = (0.1, 0.2, 0.3, 0.4);
        // Node ids: 0 root, then the chain; leaves fill remaining slots.
        let nodes = vec![
            TreeNode::Internal { feature: 0, threshold: b1, left: 1, right: 2 },
            leaf(0.0),
            TreeNode::Internal { feature: 1, threshold: b2, left: 3, right: 4 },
            TreeNode::Internal { feature: 2, threshold: b3, left: 5, right: 6 },
            leaf(0.0),
            leaf(0.0),
            TreeNode::Internal { feature: 2, threshold: b3p, left: 7, right: 8 },
            leaf(42.0),
            leaf(0.0),
        ];
        let tree = DecisionTree { root: 0, nodes };
        let region = tree.leaf_region(7).unwrap();
        let expect = [
            (0, b1, Side::Greater),
            (1, b2, Side::LessEq),
            (2, b3, Side::Greater),
            (2, b3p, Side::LessEq),
        ];
        assert_eq!(region.len(), expect.len());
        for (cond, (f, b, s)) in region.iter().zip(expect) {
            assert_eq!(cond.feature, f);
            assert_eq!(cond.threshold, b);
            assert_eq!(cond.side, s);
        }
    }

    fn build_random_tree(
        rng: &mut rand_chacha::ChaCha8Rng,
        nodes: &mut Vec<TreeNode>,
        n_features: usize,
        depth: usize,
    ) -> usize {
        if depth == 0 || rng.gen_bool(0.3) {
            nodes.push(leaf(rng.gen_range(-10.0..10.0)));
        } else {
            let left = build_random_tree(rng, nodes, n_features, depth - 1);
            let right = build_random_tree(rng, nodes, n_features, depth - 1);
            nodes.push(TreeNode::Internal {
                feature: rng.gen_range(0..n_features),
                threshold: rng.gen_range(-1.0..1.0),
                left,
                right,
            });
        }
        nodes.len() - 1
    }

    fn random_ensemble(seed: u64, n_trees: usize, n_features: usize) -> TreeEnsemble {
        let mut rng = substream(seed, 99);
        let trees = (0..n_trees)
            .map(|_| {
                let mut nodes = Vec::new();
                let root = build_random_tree(&mut rng, &mut nodes, n_features, 4);
                WeightedTree {
                    weight: rng.gen_range(0.01..2.0),
                    tree: DecisionTree { root, nodes },
                }
            })
            .collect();
        let ens = TreeEnsemble {
            task: Task::Regression,
            n_features,
            n_classes: None,
            trees,
        };
        ens.validate().unwrap();
        ens
    }

    #[test]
    fn routing_agrees_with_leaf_region_membership() {
        let ens = random_ensemble(3, 4, 3);
        let mut rng = substream(4, 0);
        for wt in &ens.trees {
            let tree = &wt.tree;
            for _ in 0..250 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let leaf_id = tree.apply_leaf(&x);
                for candidate in tree.leaf_ids() {
                    let region = tree.leaf_region(candidate).unwrap();
                    let inside = region.iter().all(|c| match c.side {
                        Side::Greater => x[c.feature] > c.threshold,
                        Side::LessEq => x[c.feature] <= c.threshold,
                    });
                    assert_eq!(
                        inside,
                        candidate == leaf_id,
                        "membership/routing disagree on leaf {candidate}"
                    );
                }
            }
        }
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let dir = std::env::temp_dir().join(format!("treedefrag_ens_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for seed in 0..5u64 {
            let ens = random_ensemble(seed, 20, 3);
            let path = dir.join(format!("ens_{seed}.json"));
            save_ensemble(&ens, &path).unwrap();
            let loaded = load_ensemble(&path).unwrap();
            assert_eq!(ens, loaded);
            // Second save must be byte-identical.
            let path2 = dir.join(format!("ens_{seed}_resave.json"));
            save_ensemble(&loaded, &path2).unwrap();
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&path2).unwrap()
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn hundred_tree_forest_survives_round_trip() {
        let data = gen_synthetic1(200, 0.1, 11);
        let params = ForestParams {
            n_trees: 100,
            max_depth: Some(4),
            ..ForestParams::default()
        };
        let ens = train_forest(&data, &params, 5).unwrap();
        let dir = std::env::temp_dir().join(format!("treedefrag_forest_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("forest.json");
        save_ensemble(&ens, &path).unwrap();
        let reloaded = load_ensemble(&path).unwrap();
        assert_eq!(ens, reloaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn max_depth_zero_gives_single_leaf_trees() {
        let data = gen_synthetic1(50, 0.1, 2);
        let params = ForestParams {
            n_trees: 5,
            max_depth: Some(0),
            ..ForestParams::default()
        };
        let ens = train_forest(&data, &params, 0).unwrap();
        for wt in &ens.trees {
            assert_eq!(wt.tree.nodes.len(), 1);
            assert!(wt.tree.nodes[0].is_leaf());
        }
    }

    #[test]
    fn same_seed_trains_identical_forests() {
        let data = gen_synthetic1(120, 0.1, 3);
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let a = train_forest(&data, &params, 42).unwrap();
        let b = train_forest(&data, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&data, &params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forest_reaches_realistic_accuracy_on_xor_data() {
        let train = gen_synthetic1(1000, 0.1, 100);
        let test = gen_synthetic1(1000, 0.1, 101);
        let ens = train_forest(&train, &ForestParams::default(), 0).unwrap();
        let labels = match &test.targets {
            Targets::Classification { labels, .. } => labels,
            _ => unreachable!(),
        };
        let correct = test
            .x
            .iter()
            .zip(labels)
            .filter(|(row, &y)| ens.predict(row).as_class().unwrap() == y)
            .count();
        let acc = correct as f64 / test.n_rows() as f64;
        assert!(acc >= 0.85, "forest test accuracy {acc} below 0.85");
    }

    #[test]
    fn empirical_region_counts() {
        use crate::binarizer::{binarize, collect_statements};
        use crate::data::binarize_dataset;

        // All rows identical -> 1 region; all distinct -> N regions.
        let data = gen_synthetic1(300, 0.1, 7);
        let ens = train_forest(
            &data,
            &ForestParams {
                n_trees: 3,
                max_depth: Some(3),
                ..ForestParams::default()
            },
            1,
        )
        .unwrap();
        let table = collect_statements(&ens, true);
        let bin = binarize_dataset(&data, &table).unwrap();
        let g = count_empirical_regions(&bin);
        assert!(g >= 1 && g <= 300);

        let constant = BinarizedDataset {
            rows: vec![binarize(&[0.3, 0.3], &table); 10],
            targets: Targets::Regression(vec![0.0; 10]),
            table: table.clone(),
        };
        assert_eq!(count_empirical_regions(&constant), 1);
    }

    /// With only the first five trees of a full-size forest, the data should
    /// touch on the order of hundreds to a thousand distinct cells.
    #[test]
    fn five_tree_cell_count_is_large() {
        use crate::binarizer::collect_statements;
        use crate::data::binarize_dataset;

        let data = gen_synthetic1(1000, 0.1, 100);
        let full = train_forest(&data, &ForestParams::default(), 0).unwrap();
        let five = TreeEnsemble {
            trees: full.trees[..5].to_vec(),
            ..full.clone()
        };
        let table = collect_statements(&five, true);
        let bin = binarize_dataset(&data, &table).unwrap();
        let g = count_empirical_regions(&bin);
        assert!(
            (100..=1000).contains(&g),
            "expected hundreds-to-thousand distinct cells, got {g}"
        );
    }
}
