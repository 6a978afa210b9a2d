//! Defragment trained decision-tree ensembles into a few interpretable rules.
//!
//! A tree ensemble splits the input space into a huge number of tiny cells.
//! This crate fits a small mixture of axis-aligned regions to the ensemble's
//! behaviour: every internal tree node contributes a binary statement
//! `x[d] > b`, inputs are mapped to statement-indicator vectors, and a
//! Bernoulli mixture over those vectors (paired with a per-region output
//! model) is fitted either with plain EM at fixed region count or with a
//! shrinkage-regularized variant that selects the region count on its own.
//! Fitted regions are translated back into threshold rules.
//!
//! The `treedefrag` binary wires the pieces into a pipeline: generate or load
//! data, train a forest, simplify it, evaluate and plot the result.

pub mod binarizer;
pub mod cli;
pub mod data;
pub mod em;
pub mod ensemble;
pub mod error;
pub mod fab;
pub mod model;
pub mod plot;
pub mod rules;
pub mod util;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Prediction task of an ensemble, dataset, or fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Regression => write!(f, "regression"),
            Task::Classification => write!(f, "classification"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::Invalid(format!(
                "unknown task {other:?} (expected \"regression\" or \"classification\")"
            ))),
        }
    }
}

/// A predicted output: a numeric value for regression, a class index for
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputValue {
    Class(usize),
    Value(f64),
}

impl OutputValue {
    pub fn as_value(&self) -> Option<f64> {
        match self {
            OutputValue::Value(v) => Some(*v),
            OutputValue::Class(_) => None,
        }
    }

    pub fn as_class(&self) -> Option<usize> {
        match self {
            OutputValue::Class(c) => Some(*c),
            OutputValue::Value(_) => None,
        }
    }
}

impl std::fmt::Display for OutputValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputValue::Value(v) => write!(f, "{v}"),
            OutputValue::Class(c) => write!(f, "{c}"),
        }
    }
}
