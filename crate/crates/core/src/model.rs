//! The fitted probabilistic model: per-region output distributions, a
//! Bernoulli model over statement bits, and mixture weights, plus the
//! two-step MAP predictor.
//!
//! All likelihood work happens in the log domain. Bit probabilities are
//! stored clamped to `[PROB_CLIP, 1 - PROB_CLIP]`; mixture weights and class
//! probabilities keep their exact simplex values and are floored at
//! `PROB_CLIP` only inside log evaluations, so `log(1) = 0` stays exact.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binarizer::{BinaryFeature, StatementTable};
use crate::data::{BinarizedDataset, Targets};
use crate::error::{Error, Result};
use crate::util::argmax;
use crate::{OutputValue, Task};

/// Clamp width for probabilities inside log evaluations.
pub const PROB_CLIP: f64 = 1e-6;
/// Smallest admissible precision for a regression region.
pub const LAMBDA_FLOOR: f64 = 1e-8;
/// Weighted variances below this are treated as this (degenerate regions).
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Floors a probability for use under a logarithm.
#[inline]
pub(crate) fn log_clipped(p: f64) -> f64 {
    p.max(PROB_CLIP).ln()
}

/// Per-region output distribution: Gaussian for regression (mean and
/// precision), categorical for classification.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputModel {
    Regression { mu: Vec<f64>, lambda: Vec<f64> },
    Classification { gamma: Vec<Vec<f64>> },
}

impl OutputModel {
    pub fn n_regions(&self) -> usize {
        match self {
            OutputModel::Regression { mu, .. } => mu.len(),
            OutputModel::Classification { gamma } => gamma.len(),
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            OutputModel::Regression { .. } => None,
            OutputModel::Classification { gamma } => gamma.first().map(Vec::len),
        }
    }
}

/// Per-region Bernoulli parameters over the statement bits (rows: regions,
/// columns: statements), entries clamped to the clip interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionModel {
    pub eta: Vec<Vec<f64>>,
}

/// Mixture weights over regions (a probability simplex).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub alpha: Vec<f64>,
}

/// A target value in the shape the output likelihood expects.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetValue {
    Numeric(f64),
    OneHot(Vec<f64>),
}

/// The complete simplified model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedModel {
    pub task: Task,
    pub output: OutputModel,
    pub regions: RegionModel,
    pub weights: MixtureWeights,
    pub table: StatementTable,
}

impl SimplifiedModel {
    pub fn n_regions(&self) -> usize {
        self.weights.alpha.len()
    }

    pub fn n_statements(&self) -> usize {
        self.table.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_regions();
        let l = self.n_statements();
        if k == 0 {
            return Err(Error::InvalidModel("model has no regions".into()));
        }
        if self.output.n_regions() != k || self.regions.eta.len() != k {
            return Err(Error::InvalidModel(
                "component region counts disagree".into(),
            ));
        }
        match (self.task, &self.output) {
            (Task::Regression, OutputModel::Regression { mu, lambda }) => {
                if mu.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("non-finite region mean".into()));
                }
                if lambda.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidModel("region precision must be positive".into()));
                }
            }
            (Task::Classification, OutputModel::Classification { gamma }) => {
                for (i, row) in gamma.iter().enumerate() {
                    if row.is_empty() || row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "region {i}: class probabilities must be non-negative"
                        )));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidModel(format!(
                            "region {i}: class probabilities sum to {s}"
                        )));
                    }
                }
            }
            _ => {
                return Err(Error::InvalidModel(
                    "output model does not match task".into(),
                ))
            }
        }
        for (i, row) in self.regions.eta.iter().enumerate() {
            if row.len() != l {
                return Err(Error::InvalidModel(format!(
                    "region {i}: eta row length {} != statement count {l}",
                    row.len()
                )));
            }
            if row
                .iter()
                .any(|v| !v.is_finite() || *v < PROB_CLIP || *v > 1.0 - PROB_CLIP)
            {
                return Err(Error::InvalidModel(format!(
                    "region {i}: eta entries must lie in the clipped unit interval"
                )));
            }
        }
        if self.weights.alpha.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel("mixture weights must be non-negative".into()));
        }
        let s: f64 = self.weights.alpha.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("mixture weights sum to {s}")));
        }
        Ok(())
    }

    /// log p(s | region k) under the Bernoulli bit model.
    pub fn log_p_s_given_k(&self, s: &BinaryFeature, k: usize) -> f64 {
        let row = &self.regions.eta[k];
        debug_assert_eq!(s.bits.len(), row.len());
        let mut acc = 0.0;
        for (&bit, &p) in s.bits.iter().zip(row) {
            acc += if bit { p.ln() } else { (1.0 - p).ln() };
        }
        acc
    }

    /// log p(y | region k) under the output model.
    pub fn log_p_y_given_k(&self, y: &TargetValue, k: usize) -> Result<f64> {
        match (&self.output, y) {
            (OutputModel::Regression { mu, lambda }, TargetValue::Numeric(v)) => {
                Ok(log_normal(*v, mu[k], lambda[k]))
            }
            (OutputModel::Classification { gamma }, TargetValue::OneHot(one_hot)) => {
                let class = one_hot_class(one_hot, gamma[k].len())?;
                Ok(log_clipped(gamma[k][class]))
            }
            _ => Err(Error::Invalid(
                "target value shape does not match the model's task".into(),
            )),
        }
    }

    /// log of the joint factor for region k:
    /// log p(y|k) + log p(s|k) + log alpha_k.
    pub fn log_joint(&self, y: &TargetValue, s: &BinaryFeature, k: usize) -> Result<f64> {
        Ok(self.log_p_y_given_k(y, k)?
            + self.log_p_s_given_k(s, k)
            + log_clipped(self.weights.alpha[k]))
    }

    /// Two-step MAP prediction: the most probable region given the bits
    /// (the target plays no role here), then that region's most probable
    /// output. Ties go to the lowest index in both steps.
    pub fn predict(&self, s: &BinaryFeature) -> (usize, OutputValue) {
        let scores: Vec<f64> = (0..self.n_regions())
            .map(|k| self.log_p_s_given_k(s, k) + log_clipped(self.weights.alpha[k]))
            .collect();
        let k = argmax(&scores);
        let y = match &self.output {
            OutputModel::Regression { mu, .. } => OutputValue::Value(mu[k]),
            OutputModel::Classification { gamma } => OutputValue::Class(argmax(&gamma[k])),
        };
        (k, y)
    }

    /// Training-error style total: sum of squared residuals (regression) or
    /// misclassification count (classification).
    pub fn model_error(&self, data: &BinarizedDataset) -> Result<f64> {
        if data.task() != self.task {
            return Err(Error::TaskMismatch(format!(
                "model is {} but data is {}",
                self.task,
                data.task()
            )));
        }
        let mut total = 0.0;
        match &data.targets {
            Targets::Regression(ys) => {
                for (row, &y) in data.rows.iter().zip(ys) {
                    let (_, pred) = self.predict(row);
                    let v = pred.as_value().unwrap();
                    total += (y - v) * (y - v);
                }
            }
            Targets::Classification { labels, .. } => {
                for (row, &y) in data.rows.iter().zip(labels) {
                    let (_, pred) = self.predict(row);
                    if pred.as_class().unwrap() != y {
                        total += 1.0;
                    }
                }
            }
        }
        Ok(total)
    }

    /// `model_error` divided by the number of rows (mean squared error or
    /// misclassification rate), the form used in reports.
    pub fn mean_model_error(&self, data: &BinarizedDataset) -> Result<f64> {
        Ok(self.model_error(data)? / data.n_rows().max(1) as f64)
    }
}

/// Log density of N(mean, 1/precision) at v.
#[inline]
pub(crate) fn log_normal(v: f64, mean: f64, precision: f64) -> f64 {
    0.5 * (precision.ln() - (2.0 * PI).ln()) - 0.5 * precision * (v - mean) * (v - mean)
}

fn one_hot_class(one_hot: &[f64], n_classes: usize) -> Result<usize> {
    if one_hot.len() != n_classes {
        return Err(Error::Invalid(format!(
            "target vector length {} != {n_classes} classes",
            one_hot.len()
        )));
    }
    let mut class = None;
    for (c, &v) in one_hot.iter().enumerate() {
        if (v - 1.0).abs() < 1e-12 {
            if class.is_some() {
                return Err(Error::Invalid("target vector has multiple ones".into()));
            }
            class = Some(c);
        } else if v.abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "target vector entry {v} is neither 0 nor 1"
            )));
        }
    }
    class.ok_or_else(|| Error::Invalid("target vector has no 1 entry".into()))
}

// --- serialization -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    task: Task,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    statements: StatementTable,
    alpha: Vec<f64>,
    eta: Vec<Vec<f64>>,
    phi: PhiDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PhiDoc {
    Regression { mu: Vec<f64>, lambda: Vec<f64> },
    Classification { gamma: Vec<Vec<f64>> },
}

/// Writes the model file; full 64-bit float round-trip precision.
pub fn save_model(model: &SimplifiedModel, path: &Path) -> Result<()> {
    let doc = ModelDoc {
        task: model.task,
        k: model.n_regions(),
        l: model.n_statements(),
        statements: model.table.clone(),
        alpha: model.weights.alpha.clone(),
        eta: model.regions.eta.clone(),
        phi: match &model.output {
            OutputModel::Regression { mu, lambda } => PhiDoc::Regression {
                mu: mu.clone(),
                lambda: lambda.clone(),
            },
            OutputModel::Classification { gamma } => PhiDoc::Classification {
                gamma: gamma.clone(),
            },
        },
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::parse(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads and validates a model file.
pub fn load_model(path: &Path) -> Result<SimplifiedModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelDoc = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if doc.statements.len() != doc.l {
        return Err(Error::parse(
            path,
            format!("statement list length {} != L = {}", doc.statements.len(), doc.l),
        ));
    }
    if doc.alpha.len() != doc.k || doc.eta.len() != doc.k {
        return Err(Error::parse(
            path,
            format!("alpha/eta region counts disagree with K = {}", doc.k),
        ));
    }
    let output = match (doc.task, doc.phi) {
        (Task::Regression, PhiDoc::Regression { mu, lambda }) => {
            OutputModel::Regression { mu, lambda }
        }
        (Task::Classification, PhiDoc::Classification { gamma }) => {
            OutputModel::Classification { gamma }
        }
        _ => {
            return Err(Error::parse(path, "phi block does not match task"));
        }
    };
    let model = SimplifiedModel {
        task: doc.task,
        output,
        regions: RegionModel { eta: doc.eta },
        weights: MixtureWeights { alpha: doc.alpha },
        table: doc.statements,
    };
    model.validate()?;
    Ok(model)
}
