//! Translating fitted regions into human-readable interval rules, plus the
//! coverage metrics used to judge them.
//!
//! A region's bit probabilities near 1 mean "the region satisfies
//! `x > threshold`", near 0 mean "the region satisfies `x <= threshold`";
//! anything in between leaves the statement unconstrained. Included
//! statements collapse per feature to the tightest interval.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OutputModel, SimplifiedModel};
use crate::util::argmax;
use crate::{OutputValue, Task};

/// An interval constraint on one feature: `lower < x[feature] <= upper`,
/// with `None` meaning unbounded on that side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInterval {
    pub feature: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// One extracted rule: a conjunction of feature intervals and a predictive
/// value, plus the region's mixture weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub y: OutputValue,
    pub alpha: f64,
    pub intervals: Vec<FeatureInterval>,
    /// Features whose rounded statements contradicted each other and were
    /// dropped from this rule. Not part of the file format.
    #[serde(skip)]
    pub dropped_features: Vec<usize>,
}

/// The rules of a fitted model, one per region, in region order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub task: Task,
    pub rules: Vec<Rule>,
}

/// Output formats for `format_rules`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleStyle {
    Text,
    Csv,
    Structured,
}

/// Translates region `k` of a model into a rule.
///
/// A statement is included as `x > b` when its bit probability is at least
/// `1 - tau`, as `x <= b` when it is at most `tau`, and skipped otherwise.
/// Per feature the included statements collapse to the tightest interval
/// (largest `>` threshold, smallest `<=` threshold). If rounding produces an
/// empty interval the feature's constraints are dropped and recorded on the
/// rule.
pub fn eta_to_rule(model: &SimplifiedModel, k: usize, tau: f64) -> Result<Rule> {
    if k >= model.n_regions() {
        return Err(Error::Invalid(format!(
            "region {k} out of range ({} regions)",
            model.n_regions()
        )));
    }
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::Invalid(format!(
            "tau must lie in (0, 0.5], got {tau}"
        )));
    }
    let n_features = model
        .table
        .statements
        .iter()
        .map(|s| s.feature)
        .max()
        .map_or(0, |m| m + 1);
    let mut lower: Vec<Option<f64>> = vec![None; n_features];
    let mut upper: Vec<Option<f64>> = vec![None; n_features];
    for (stmt, &p) in model.table.statements.iter().zip(&model.regions.eta[k]) {
        if p >= 1.0 - tau {
            let slot = &mut lower[stmt.feature];
            *slot = Some(slot.map_or(stmt.threshold, |v: f64| v.max(stmt.threshold)));
        } else if p <= tau {
            let slot = &mut upper[stmt.feature];
            *slot = Some(slot.map_or(stmt.threshold, |v: f64| v.min(stmt.threshold)));
        }
    }

    let mut intervals = Vec::new();
    let mut dropped_features = Vec::new();
    for f in 0..n_features {
        match (lower[f], upper[f]) {
            (None, None) => {}
            (Some(lo), Some(hi)) if lo >= hi => dropped_features.push(f),
            (lo, hi) => intervals.push(FeatureInterval {
                feature: f,
                lower: lo,
                upper: hi,
            }),
        }
    }

    let y = match &model.output {
        OutputModel::Regression { mu, .. } => OutputValue::Value(mu[k]),
        OutputModel::Classification { gamma } => OutputValue::Class(argmax(&gamma[k])),
    };
    Ok(Rule {
        y,
        alpha: model.weights.alpha[k],
        intervals,
        dropped_features,
    })
}

/// Translates every region of a model.
pub fn rules_from_model(model: &SimplifiedModel, tau: f64) -> Result<RuleSet> {
    let rules = (0..model.n_regions())
        .map(|k| eta_to_rule(model, k, tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(RuleSet {
        task: model.task,
        rules,
    })
}

/// True iff `x` satisfies every interval of the rule (lower exclusive,
/// upper inclusive, matching statement strictness).
pub fn rule_covers(rule: &Rule, x: &[f64]) -> bool {
    rule.intervals.iter().all(|iv| {
        let Some(&v) = x.get(iv.feature) else {
            return false;
        };
        iv.lower.map_or(true, |lo| v > lo) && iv.upper.map_or(true, |hi| v <= hi)
    })
}

/// Number of rules covering each input.
pub fn coverage_counts(ruleset: &RuleSet, inputs: &[Vec<f64>]) -> Vec<usize> {
    inputs
        .iter()
        .map(|x| ruleset.rules.iter().filter(|r| rule_covers(r, x)).count())
        .collect()
}

/// Mean number of rules covering each input; 1.0 means a clean partition.
pub fn overlap_metric(ruleset: &RuleSet, inputs: &[Vec<f64>]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Invalid("overlap metric needs at least one input".into()));
    }
    let counts = coverage_counts(ruleset, inputs);
    Ok(counts.iter().sum::<usize>() as f64 / inputs.len() as f64)
}

fn bound_str(v: Option<f64>, unbounded: &str) -> String {
    v.map_or_else(|| unbounded.to_string(), |b| format!("{b}"))
}

fn feature_name(names: Option<&[String]>, f: usize) -> String {
    names
        .and_then(|n| n.get(f).cloned())
        .unwrap_or_else(|| format!("x{f}"))
}

/// Renders a rule set. Text gives one line per rule
/// (`y = v <= x0 > a, x1 <= b, ...`), CSV one row per rule with interval
/// tokens, and Structured the JSON document that `parse_rules` reads back.
pub fn format_rules(ruleset: &RuleSet, style: RuleStyle) -> String {
    format_rules_named(ruleset, style, None)
}

/// `format_rules` with display names for features (text style only).
pub fn format_rules_named(
    ruleset: &RuleSet,
    style: RuleStyle,
    names: Option<&[String]>,
) -> String {
    match style {
        RuleStyle::Text => {
            let mut out = String::new();
            for rule in &ruleset.rules {
                let mut conjuncts = Vec::new();
                for iv in &rule.intervals {
                    let name = feature_name(names, iv.feature);
                    if let Some(lo) = iv.lower {
                        conjuncts.push(format!("{name} > {lo}"));
                    }
                    if let Some(hi) = iv.upper {
                        conjuncts.push(format!("{name} <= {hi}"));
                    }
                }
                let body = if conjuncts.is_empty() {
                    "(always)".to_string()
                } else {
                    conjuncts.join(", ")
                };
                out.push_str(&format!("y = {} <= {}\n", rule.y, body));
            }
            out
        }
        RuleStyle::Csv => {
            let mut out = String::from("y,alpha,intervals\n");
            for rule in &ruleset.rules {
                let tokens: Vec<String> = rule
                    .intervals
                    .iter()
                    .map(|iv| {
                        format!(
                            "{}:{}<..<={}",
                            iv.feature,
                            bound_str(iv.lower, "-inf"),
                            bound_str(iv.upper, "inf")
                        )
                    })
                    .collect();
                out.push_str(&format!("{},{},{}\n", rule.y, rule.alpha, tokens.join(" ")));
            }
            out
        }
        RuleStyle::Structured => {
            let mut s = serde_json::to_string_pretty(ruleset).expect("ruleset serializes");
            s.push('\n');
            s
        }
    }
}

/// Parses the structured format back into a rule set.
pub fn parse_rules(text: &str) -> Result<RuleSet> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("bad rule document: {e}")))
}

/// Writes the structured rule file.
pub fn save_rules(ruleset: &RuleSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_rules(ruleset, RuleStyle::Structured).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads the structured rule file.
pub fn load_rules(path: &Path) -> Result<RuleSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    serde_json::from_reader(reader).map_err(|e| Error::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarizer::{Statement, StatementTable};
    use crate::model::{MixtureWeights, RegionModel};
    use crate::util::substream;
    use rand::Rng;

    /// Seven statements: thresholds (0.2, 0.5, 0.8) on x0 and
    /// (0.1, 0.35, 0.6, 0.85) on x1.
    fn seven_table() -> StatementTable {
        StatementTable::from_statements(
            [
                (0, 0.2),
                (0, 0.5),
                (0, 0.8),
                (1, 0.1),
                (1, 0.35),
                (1, 0.6),
                (1, 0.85),
            ]
            .iter()
            .map(|&(feature, threshold)| Statement { feature, threshold })
            .collect(),
            true,
        )
    }

    fn model_with_eta(eta: Vec<Vec<f64>>) -> SimplifiedModel {
        let k = eta.len();
        let model = SimplifiedModel {
            task: Task::Regression,
            output: OutputModel::Regression {
                mu: (0..k).map(|i| i as f64).collect(),
                lambda: vec![1.0; k],
            },
            regions: RegionModel { eta },
            weights: MixtureWeights {
                alpha: vec![1.0 / k as f64; k],
            },
            table: seven_table(),
        };
        model.validate().unwrap();
        model
    }

    /// Pattern (1, *, 0, 1, *, 0, 0) over the seven-statement table reads as
    /// 0.2 < x0 <= 0.8, 0.1 < x1 <= 0.6.
    #[test]
    fn concatenated_region_pattern_becomes_box() {
        let model = model_with_eta(vec![vec![0.99, 0.5, 0.01, 0.99, 0.5, 0.01, 0.01]]);
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        assert_eq!(
            rule.intervals,
            vec![
                FeatureInterval {
                    feature: 0,
                    lower: Some(0.2),
                    upper: Some(0.8)
                },
                FeatureInterval {
                    feature: 1,
                    lower: Some(0.1),
                    upper: Some(0.6)
                },
            ]
        );
        assert!(rule.dropped_features.is_empty());
    }

    #[test]
    fn all_ambiguous_gives_unconstrained_rule() {
        let model = model_with_eta(vec![vec![0.5; 7]]);
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        assert!(rule.intervals.is_empty());
        let mut rng = substream(1, 0);
        for _ in 0..20 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            assert!(rule_covers(&rule, &x));
        }
    }

    #[test]
    fn repeated_greater_statements_take_max_threshold() {
        // All three x0 statements confidently "greater": tightest lower
        // bound is the largest threshold.
        let model = model_with_eta(vec![vec![0.99, 0.99, 0.99, 0.5, 0.5, 0.5, 0.5]]);
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        assert_eq!(
            rule.intervals,
            vec![FeatureInterval {
                feature: 0,
                lower: Some(0.8),
                upper: None
            }]
        );
    }

    #[test]
    fn contradictory_rounding_drops_feature() {
        // x0 forced both > 0.8 and <= 0.2: inconsistent, feature dropped.
        let model = model_with_eta(vec![vec![0.01, 0.5, 0.99, 0.5, 0.5, 0.5, 0.5]]);
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        assert_eq!(rule.dropped_features, vec![0]);
        assert!(rule.intervals.is_empty());
    }

    #[test]
    fn boundary_conventions() {
        let model = model_with_eta(vec![vec![0.99, 0.5, 0.01, 0.5, 0.5, 0.5, 0.5]]);
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        // 0.2 < x0 <= 0.8: lower exclusive, upper inclusive.
        assert!(!rule_covers(&rule, &[0.2, 0.0]));
        assert!(rule_covers(&rule, &[0.8, 0.0]));
        assert!(rule_covers(&rule, &[0.5, -10.0]));
        assert!(!rule_covers(&rule, &[0.81, 0.0]));
    }

    #[test]
    fn rule_covers_agrees_with_statement_by_statement_check() {
        let model = model_with_eta(vec![vec![0.99, 0.5, 0.01, 0.99, 0.5, 0.01, 0.01]]);
        let tau = 0.2;
        let rule = eta_to_rule(&model, 0, tau).unwrap();
        let mut rng = substream(2, 0);
        for _ in 0..1000 {
            let x = [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)];
            // Direct check against every confidently rounded statement.
            let direct = model
                .table
                .statements
                .iter()
                .zip(&model.regions.eta[0])
                .all(|(stmt, &p)| {
                    if p >= 1.0 - tau {
                        x[stmt.feature] > stmt.threshold
                    } else if p <= tau {
                        x[stmt.feature] <= stmt.threshold
                    } else {
                        true
                    }
                });
            assert_eq!(rule_covers(&rule, &x), direct, "x = {x:?}");
        }
    }

    #[test]
    fn overlap_of_disjoint_exhaustive_rules_is_one() {
        // Two rules split the line at 0.5 via the x0 = 0.5 statement.
        let model = model_with_eta(vec![
            vec![0.5, 0.01, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![0.5, 0.99, 0.5, 0.5, 0.5, 0.5, 0.5],
        ]);
        let ruleset = rules_from_model(&model, 0.2).unwrap();
        let mut rng = substream(3, 0);
        let inputs: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let overlap = overlap_metric(&ruleset, &inputs).unwrap();
        assert_eq!(overlap, 1.0);
    }

    #[test]
    fn duplicated_rule_doubles_overlap() {
        let row = vec![0.5, 0.01, 0.5, 0.5, 0.5, 0.5, 0.5];
        let model = model_with_eta(vec![row.clone(), row]);
        let ruleset = rules_from_model(&model, 0.2).unwrap();
        let inputs = vec![vec![0.3, 0.3]];
        assert_eq!(overlap_metric(&ruleset, &inputs).unwrap(), 2.0);
    }

    #[test]
    fn binary_exclusive_regions_partition_their_points() {
        // Exactly binary patterns on the 0.5 statement split the inputs into
        // two regions; points drawn inside either get covered exactly once.
        let clip = crate::model::PROB_CLIP;
        let model = model_with_eta(vec![
            vec![0.5, clip, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![0.5, 1.0 - clip, 0.5, 0.5, 0.5, 0.5, 0.5],
        ]);
        let ruleset = rules_from_model(&model, 0.3).unwrap();
        let mut rng = substream(4, 0);
        let inputs: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        assert_eq!(overlap_metric(&ruleset, &inputs).unwrap(), 1.0);
    }

    #[test]
    fn text_format_unconstrained_and_two_statement_rules() {
        let model = model_with_eta(vec![
            vec![0.5; 7],
            vec![0.99, 0.5, 0.01, 0.5, 0.5, 0.5, 0.5],
        ]);
        let ruleset = rules_from_model(&model, 0.2).unwrap();
        let text = format_rules(&ruleset, RuleStyle::Text);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "y = 0 <= (always)");
        assert_eq!(lines[1], "y = 1 <= x0 > 0.2, x0 <= 0.8");
    }

    #[test]
    fn csv_format_has_interval_tokens() {
        let model = model_with_eta(vec![vec![0.99, 0.5, 0.5, 0.5, 0.5, 0.01, 0.5]]);
        let ruleset = rules_from_model(&model, 0.2).unwrap();
        let csv = format_rules(&ruleset, RuleStyle::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "y,alpha,intervals");
        assert_eq!(lines[1], "0,1,0:0.2<..<=inf 1:-inf<..<=0.6");
    }

    #[test]
    fn structured_round_trip_is_identity() {
        let model = model_with_eta(vec![
            vec![0.99, 0.5, 0.01, 0.99, 0.5, 0.01, 0.01],
            vec![0.5; 7],
        ]);
        let ruleset = rules_from_model(&model, 0.2).unwrap();
        let text = format_rules(&ruleset, RuleStyle::Structured);
        let parsed = parse_rules(&text).unwrap();
        assert_eq!(parsed, ruleset);
        // And byte-identical when re-rendered.
        assert_eq!(format_rules(&parsed, RuleStyle::Structured), text);
    }

    #[test]
    fn interval_tightening_is_order_independent() {
        let eta_a = vec![0.99, 0.99, 0.99, 0.5, 0.5, 0.5, 0.5];
        let model_a = model_with_eta(vec![eta_a]);
        // Same statements, reversed table order (still canonical after sort,
        // so permute eta accordingly by construction).
        let rule_a = eta_to_rule(&model_a, 0, 0.2).unwrap();
        assert_eq!(rule_a.intervals[0].lower, Some(0.8));
    }

    #[test]
    fn classification_rule_outputs_class_index() {
        let model = SimplifiedModel {
            task: Task::Classification,
            output: OutputModel::Classification {
                gamma: vec![vec![0.1, 0.9]],
            },
            regions: RegionModel {
                eta: vec![vec![0.5; 7]],
            },
            weights: MixtureWeights { alpha: vec![1.0] },
            table: seven_table(),
        };
        let rule = eta_to_rule(&model, 0, 0.2).unwrap();
        assert_eq!(rule.y, OutputValue::Class(1));
    }
}
