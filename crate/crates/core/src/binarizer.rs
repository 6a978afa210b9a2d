//! Statement tables and binary feature maps.
//!
//! Every internal tree node contributes a statement `x[feature] > threshold`.
//! The statement table is the global, canonically ordered list of those
//! statements; an input maps to the bit vector of their truth values.

use serde::{Deserialize, Serialize};

use crate::ensemble::{Condition, Side, TreeEnsemble, TreeNode};
use crate::error::{Error, Result};

/// One table entry: the statement `x[feature] > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub feature: usize,
    pub threshold: f64,
}

/// Ordered list of statements drawn from an ensemble's internal nodes.
///
/// Entries are sorted by `(feature, threshold)` so bit indices are
/// reproducible across runs and serialized models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatementTable {
    pub statements: Vec<Statement>,
}

impl StatementTable {
    /// Builds a table from raw statements: canonical sort, optional
    /// deduplication of identical `(feature, threshold)` pairs.
    pub fn from_statements(mut statements: Vec<Statement>, dedup: bool) -> Self {
        statements.sort_by(|a, b| {
            a.feature
                .cmp(&b.feature)
                .then(a.threshold.total_cmp(&b.threshold))
        });
        if dedup {
            statements.dedup_by(|a, b| a.feature == b.feature && a.threshold == b.threshold);
        }
        StatementTable { statements }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

/// Bit vector of statement truth values for one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFeature {
    pub bits: Vec<bool>,
}

impl BinaryFeature {
    /// Indices of set bits, ascending.
    pub fn ones(&self) -> Vec<u32> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i as u32))
            .collect()
    }
}

/// Collects the statement table of an ensemble.
///
/// With `dedup` (the default pipeline behaviour) identical statements from
/// different nodes collapse to one entry; without it every internal node
/// keeps its own entry, still canonically ordered.
pub fn collect_statements(ensemble: &TreeEnsemble, dedup: bool) -> StatementTable {
    let mut statements = Vec::new();
    for wt in &ensemble.trees {
        for node in &wt.tree.nodes {
            if let TreeNode::Internal {
                feature, threshold, ..
            } = node
            {
                statements.push(Statement {
                    feature: *feature,
                    threshold: *threshold,
                });
            }
        }
    }
    StatementTable::from_statements(statements, dedup)
}

/// Maps an input to its binary feature: bit `l` is 1 iff
/// `x[feature_l] > threshold_l` (strict, matching tree routing).
pub fn binarize(x: &[f64], table: &StatementTable) -> BinaryFeature {
    BinaryFeature {
        bits: table
            .statements
            .iter()
            .map(|s| x[s.feature] > s.threshold)
            .collect(),
    }
}

/// A region's statement pattern: `Some(true)` where the region forces
/// `x > threshold`, `Some(false)` where it forces `x <= threshold`, and
/// `None` where the boundary does not constrain the region.
pub type EtaPattern = Vec<Option<bool>>;

/// Translates a region (a conjunction of path statements) into its pattern
/// over the statement table.
///
/// Errors if the statements contradict each other (empty region).
pub fn region_to_eta(conditions: &[Condition], table: &StatementTable) -> Result<EtaPattern> {
    // Tightest (lower, upper] interval per feature mentioned in the region.
    let max_feature = table
        .statements
        .iter()
        .map(|s| s.feature)
        .chain(conditions.iter().map(|c| c.feature))
        .max()
        .map_or(0, |m| m + 1);
    let mut lower = vec![f64::NEG_INFINITY; max_feature];
    let mut upper = vec![f64::INFINITY; max_feature];
    for c in conditions {
        match c.side {
            Side::Greater => lower[c.feature] = lower[c.feature].max(c.threshold),
            Side::LessEq => upper[c.feature] = upper[c.feature].min(c.threshold),
        }
    }
    for f in 0..max_feature {
        if lower[f] >= upper[f] {
            return Err(Error::Invalid(format!(
                "contradictory statements on feature {f}: ({} , {}] is empty",
                lower[f], upper[f]
            )));
        }
    }
    Ok(table
        .statements
        .iter()
        .map(|s| {
            if s.threshold <= lower[s.feature] {
                Some(true)
            } else if s.threshold >= upper[s.feature] {
                Some(false)
            } else {
                None
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{DecisionTree, LeafValue, WeightedTree};
    use crate::util::substream;
    use crate::Task;
    use rand::Rng;

    /// Chain tree whose internal nodes carry the given statements.
    fn chain_tree(stmts: &[(usize, f64)]) -> DecisionTree {
        let mut nodes = Vec::new();
        let mut child = {
            nodes.push(TreeNode::Leaf {
                value: LeafValue::Scalar(0.0),
            });
            0
        };
        for &(feature, threshold) in stmts.iter().rev() {
            nodes.push(TreeNode::Leaf {
                value: LeafValue::Scalar(1.0),
            });
            let leaf = nodes.len() - 1;
            nodes.push(TreeNode::Internal {
                feature,
                threshold,
                left: child,
                right: leaf,
            });
            child = nodes.len() - 1;
        }
        DecisionTree { root: child, nodes }
    }

    fn ensemble_of(trees: Vec<DecisionTree>) -> TreeEnsemble {
        let n = trees.len();
        TreeEnsemble {
            task: Task::Regression,
            n_features: 2,
            n_classes: None,
            trees: trees
                .into_iter()
                .map(|tree| WeightedTree {
                    weight: 1.0 / n as f64,
                    tree,
                })
                .collect(),
        }
    }

    /// Three thresholds on x1, four on x2 (the seven-statement configuration
    /// used throughout the binarizer tests).
    fn seven_statement_table() -> StatementTable {
        let b = [(0, 0.2), (0, 0.5), (0, 0.8), (1, 0.1), (1, 0.35), (1, 0.6), (1, 0.85)];
        StatementTable::from_statements(
            b.iter()
                .map(|&(feature, threshold)| Statement { feature, threshold })
                .collect(),
            true,
        )
    }

    #[test]
    fn single_internal_node_gives_one_entry() {
        let ens = ensemble_of(vec![chain_tree(&[(0, 0.5)])]);
        let table = collect_statements(&ens, true);
        assert_eq!(table.len(), 1);
        assert_eq!(table.statements[0], Statement { feature: 0, threshold: 0.5 });
    }

    #[test]
    fn duplicate_statements_collapse() {
        let ens = ensemble_of(vec![chain_tree(&[(1, 3.0)]), chain_tree(&[(1, 3.0)])]);
        assert_eq!(collect_statements(&ens, true).len(), 1);
        assert_eq!(collect_statements(&ens, false).len(), 2);
    }

    #[test]
    fn seven_statements_collect_in_canonical_order() {
        let t1 = chain_tree(&[(0, 0.8), (1, 0.1), (0, 0.2)]);
        let t2 = chain_tree(&[(1, 0.85), (1, 0.35), (0, 0.5), (1, 0.6)]);
        let table = collect_statements(&ensemble_of(vec![t1, t2]), true);
        assert_eq!(table, seven_statement_table());
        assert_eq!(table.len(), 7);
    }

    #[test]
    fn binarize_lower_left_subcell() {
        // Point in the lower-left sub-cell of the (b1, b3] x (b4, b6] region:
        // above b1 and b4 only.
        let table = seven_statement_table();
        let s = binarize(&[0.3, 0.2], &table);
        assert_eq!(
            s.bits,
            vec![true, false, false, true, false, false, false]
        );
    }

    #[test]
    fn binarize_extremes() {
        let table = seven_statement_table();
        assert!(binarize(&[0.0, 0.0], &table).bits.iter().all(|&b| !b));
        assert!(binarize(&[1.0, 1.0], &table).bits.iter().all(|&b| b));
    }

    #[test]
    fn region_to_eta_exact_cell() {
        // b1 < x1 <= b2, b4 < x2 <= b5 -> (1,0,0,1,0,0,0), no free positions.
        let table = seven_statement_table();
        let conds = [
            Condition { feature: 0, threshold: 0.2, side: Side::Greater },
            Condition { feature: 0, threshold: 0.5, side: Side::LessEq },
            Condition { feature: 1, threshold: 0.1, side: Side::Greater },
            Condition { feature: 1, threshold: 0.35, side: Side::LessEq },
        ];
        let eta = region_to_eta(&conds, &table).unwrap();
        assert_eq!(
            eta,
            vec![
                Some(true),
                Some(false),
                Some(false),
                Some(true),
                Some(false),
                Some(false),
                Some(false)
            ]
        );
    }

    #[test]
    fn region_to_eta_whole_space() {
        let table = seven_statement_table();
        let eta = region_to_eta(&[], &table).unwrap();
        assert!(eta.iter().all(|e| e.is_none()));
    }

    #[test]
    fn region_to_eta_concatenated_region_has_free_positions() {
        // b1 < x1 <= b3, b4 < x2 <= b6 -> (1,*,0,1,*,0,0).
        let table = seven_statement_table();
        let conds = [
            Condition { feature: 0, threshold: 0.2, side: Side::Greater },
            Condition { feature: 0, threshold: 0.8, side: Side::LessEq },
            Condition { feature: 1, threshold: 0.1, side: Side::Greater },
            Condition { feature: 1, threshold: 0.6, side: Side::LessEq },
        ];
        let eta = region_to_eta(&conds, &table).unwrap();
        assert_eq!(
            eta,
            vec![
                Some(true),
                None,
                Some(false),
                Some(true),
                None,
                Some(false),
                Some(false)
            ]
        );
    }

    #[test]
    fn contradictory_region_errors() {
        let table = seven_statement_table();
        let conds = [
            Condition { feature: 0, threshold: 0.8, side: Side::Greater },
            Condition { feature: 0, threshold: 0.2, side: Side::LessEq },
        ];
        assert!(region_to_eta(&conds, &table).is_err());
    }

    /// For any point inside a leaf's region, binarize() agrees with the
    /// region pattern at every constrained position.
    #[test]
    fn binarize_consistent_with_region_pattern() {
        use crate::data::gen_synthetic1;
        use crate::ensemble::{train_forest, ForestParams};

        let data = gen_synthetic1(200, 0.1, 21);
        let ens = train_forest(
            &data,
            &ForestParams {
                n_trees: 4,
                max_depth: Some(4),
                ..ForestParams::default()
            },
            3,
        )
        .unwrap();
        let table = collect_statements(&ens, true);
        let mut rng = substream(17, 0);
        for wt in &ens.trees {
            for leaf in wt.tree.leaf_ids() {
                let region = wt.tree.leaf_region(leaf).unwrap();
                let eta = region_to_eta(&region, &table).unwrap();
                for _ in 0..50 {
                    let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    if wt.tree.apply_leaf(&x) != leaf {
                        continue;
                    }
                    let s = binarize(&x, &table);
                    for (bit, pattern) in s.bits.iter().zip(&eta) {
                        if let Some(expected) = pattern {
                            assert_eq!(bit, expected);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn collect_statements_is_deterministic() {
        let t1 = chain_tree(&[(0, 0.8), (1, 0.1)]);
        let t2 = chain_tree(&[(1, 0.1), (0, 0.8)]);
        let a = collect_statements(&ensemble_of(vec![t1.clone(), t2.clone()]), true);
        let b = collect_statements(&ensemble_of(vec![t2, t1]), true);
        assert_eq!(a, b);
    }
}
