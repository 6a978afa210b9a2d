//! Region-count selection by shrinkage-regularized EM.
//!
//! The objective adds a per-region penalty `-omega * ln(mass_k + 1)` to the
//! EM lower bound, where `omega` counts half the per-region parameter
//! dimension. Its E-step is a fixed-point iteration: each update multiplies
//! the joint factors by `exp(-omega / (mass_k + 1))` and re-normalizes, so
//! regions claiming little data lose mass geometrically. Regions whose mean
//! responsibility drops below `delta` are removed, which selects the final
//! region count during the fit instead of via an outer sweep.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{BinarizedDataset, Targets};
use crate::em::{
    assemble, compute_log_f, em_sweep, entropy, mstep_with_ones, responsibilities_from,
    weighted_loglik, FitTrace, ResponsibilityMatrix,
};
use crate::error::{Error, Result};
use crate::model::{MixtureWeights, OutputModel, RegionModel, SimplifiedModel};
use crate::util::{argmax, derive_seed, substream};
use crate::Task;

/// Knobs for the shrinkage fit.
#[derive(Debug, Clone)]
pub struct FabConfig {
    /// Initial (maximum) region count.
    pub k_max: usize,
    /// Mean-responsibility threshold below which a region is removed;
    /// 0 disables truncation.
    pub delta: f64,
    /// Convergence threshold for the E-step fixed point (max abs change).
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Relative lower-bound change below which the outer loop stops.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Number of independent restarts in `fit_with_restarts`.
    pub restarts: usize,
    pub seed: u64,
    /// Count C-1 free class parameters per region instead of C when sizing
    /// the penalty weight.
    pub reduced_class_params: bool,
    /// Fixed penalty weight instead of the task-derived one; 0 together with
    /// `delta = 0` makes the fit coincide with plain EM (diagnostic knob).
    pub omega_override: Option<f64>,
}

impl Default for FabConfig {
    fn default() -> Self {
        FabConfig {
            k_max: 10,
            delta: 1e-3,
            inner_tol: 1e-6,
            inner_max_iter: 100,
            outer_tol: 1e-6,
            outer_max_iter: 300,
            restarts: 20,
            seed: 0,
            reduced_class_params: false,
            omega_override: None,
        }
    }
}

impl FabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::Invalid("k_max must be at least 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::Invalid(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 || self.restarts == 0 {
            return Err(Error::Invalid("iteration and restart counts must be positive".into()));
        }
        Ok(())
    }
}

/// Penalty weight: half of (per-region output parameters + statement count + 1).
///
/// The output model contributes 2 parameters per region for regression
/// (mean and precision) and `C` for classification.
pub fn omega(task: Task, n_classes: Option<usize>, n_statements: usize) -> f64 {
    omega_with(task, n_classes, n_statements, false)
}

/// `omega` with an optional reduced classification count (`C - 1` free
/// parameters, acknowledging the simplex constraint).
pub fn omega_with(
    task: Task,
    n_classes: Option<usize>,
    n_statements: usize,
    reduced_class_params: bool,
) -> f64 {
    let dim_phi = match task {
        Task::Regression => 2.0,
        Task::Classification => {
            let c = n_classes.expect("classification needs a class count") as f64;
            if reduced_class_params {
                c - 1.0
            } else {
                c
            }
        }
    };
    (dim_phi + n_statements as f64 + 1.0) / 2.0
}

fn omega_for(data: &BinarizedDataset, config: &FabConfig) -> f64 {
    let n_classes = match &data.targets {
        Targets::Classification { n_classes, .. } => Some(*n_classes),
        Targets::Regression(_) => None,
    };
    omega_with(
        data.task(),
        n_classes,
        data.n_statements(),
        config.reduced_class_params,
    )
}

/// Outcome of the E-step fixed-point iteration.
#[derive(Debug, Clone)]
pub struct EstepResult {
    pub beta: ResponsibilityMatrix,
    /// Penalized objective after the initial point and after every update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// The penalized objective evaluated from a precomputed log-factor matrix.
pub(crate) fn fab_objective_from(
    logf: &[f64],
    beta: &ResponsibilityMatrix,
    omega: f64,
) -> f64 {
    let penalty: f64 = beta
        .column_masses()
        .iter()
        .map(|&m| (m + 1.0).ln())
        .sum();
    weighted_loglik(beta, logf) + entropy(beta) - omega * penalty
}

pub(crate) fn fab_estep_inner(
    logf: &[f64],
    beta_init: &ResponsibilityMatrix,
    omega: f64,
    inner_tol: f64,
    inner_max_iter: usize,
) -> EstepResult {
    let n = beta_init.n_rows();
    let k = beta_init.n_regions();
    let mut psi = beta_init.clone();
    let mut objective_trace = vec![fab_objective_from(logf, &psi, omega)];
    for it in 1..=inner_max_iter {
        let masses = psi.column_masses();
        let penalties: Vec<f64> = masses.iter().map(|&m| omega / (m + 1.0)).collect();
        let next = responsibilities_from(logf, n, k, &penalties);
        let diff = next.max_abs_diff(&psi);
        objective_trace.push(fab_objective_from(logf, &next, omega));
        if diff < inner_tol {
            // psi is the verified fixed point: one more update moves it
            // by less than inner_tol.
            return EstepResult {
                beta: psi,
                objective_trace,
                iterations: it,
                converged: true,
            };
        }
        psi = next;
    }
    EstepResult {
        beta: psi,
        objective_trace,
        iterations: inner_max_iter,
        converged: false,
    }
}

/// Iterates the penalized responsibility update to its fixed point, warm
/// starting from `beta_init`. With `omega = 0` this reduces to the plain
/// E-step.
pub fn fab_estep(
    data: &BinarizedDataset,
    model: &SimplifiedModel,
    beta_init: &ResponsibilityMatrix,
    omega: f64,
    inner_tol: f64,
    inner_max_iter: usize,
) -> EstepResult {
    let ones = data.ones();
    let logf = compute_log_f(data, &ones, model);
    fab_estep_inner(&logf, beta_init, omega, inner_tol, inner_max_iter)
}

/// Removes regions whose mean responsibility falls below `delta` from the
/// responsibilities and the model, renormalizing what remains. Returns the
/// removed region indices (ascending). Never removes the last region: if all
/// fall below `delta`, the largest one survives.
pub fn truncate(
    beta: &ResponsibilityMatrix,
    model: &SimplifiedModel,
    delta: f64,
) -> (ResponsibilityMatrix, SimplifiedModel, Vec<usize>) {
    let k = beta.n_regions();
    let mean = beta.mean_masses();
    let mut keep: Vec<usize> = (0..k).filter(|&j| mean[j] >= delta).collect();
    if keep.is_empty() {
        keep.push(argmax(&mean));
    }
    let removed: Vec<usize> = (0..k).filter(|j| !keep.contains(j)).collect();
    if removed.is_empty() {
        return (beta.clone(), model.clone(), removed);
    }

    let mut new_beta = ResponsibilityMatrix::new(beta.n_rows(), keep.len());
    for n in 0..beta.n_rows() {
        let src = beta.row(n);
        let dst = new_beta.row_mut(n);
        let mut sum = 0.0;
        for (slot, &j) in keep.iter().enumerate() {
            dst[slot] = src[j];
            sum += src[j];
        }
        if sum > 0.0 {
            dst.iter_mut().for_each(|b| *b /= sum);
        } else {
            let u = 1.0 / keep.len() as f64;
            dst.iter_mut().for_each(|b| *b = u);
        }
    }

    let mut alpha: Vec<f64> = keep.iter().map(|&j| model.weights.alpha[j]).collect();
    let total: f64 = alpha.iter().sum();
    if total > 0.0 {
        alpha.iter_mut().for_each(|a| *a /= total);
    } else {
        let u = 1.0 / keep.len() as f64;
        alpha.iter_mut().for_each(|a| *a = u);
    }
    let output = match &model.output {
        OutputModel::Regression { mu, lambda } => OutputModel::Regression {
            mu: keep.iter().map(|&j| mu[j]).collect(),
            lambda: keep.iter().map(|&j| lambda[j]).collect(),
        },
        OutputModel::Classification { gamma } => OutputModel::Classification {
            gamma: keep.iter().map(|&j| gamma[j].clone()).collect(),
        },
    };
    let new_model = SimplifiedModel {
        task: model.task,
        output,
        regions: RegionModel {
            eta: keep.iter().map(|&j| model.regions.eta[j].clone()).collect(),
        },
        weights: MixtureWeights { alpha },
        table: model.table.clone(),
    };
    (new_beta, new_model, removed)
}

/// The penalized lower bound: expected complete-data log-likelihood, minus
/// `omega * sum_k ln(mass_k + 1)`, plus the responsibility entropy.
pub fn fab_lower_bound(
    data: &BinarizedDataset,
    model: &SimplifiedModel,
    beta: &ResponsibilityMatrix,
    omega: f64,
) -> f64 {
    let ones = data.ones();
    let logf = compute_log_f(data, &ones, model);
    fab_objective_from(&logf, beta, omega)
}

/// One full shrinkage fit: random initialization at `k_max` regions, then
/// outer iterations of {inner E fixed point, truncation check, parameter
/// update} until the bound converges.
pub fn fab_fit(data: &BinarizedDataset, config: &FabConfig) -> Result<(SimplifiedModel, FitTrace)> {
    config.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Invalid("cannot fit an empty dataset".into()));
    }
    let omega = config.omega_override.unwrap_or_else(|| omega_for(data, config));
    let ones = data.ones();
    let mut rng = substream(config.seed, 0);
    let mut beta =
        ResponsibilityMatrix::random_dirichlet(data.n_rows(), config.k_max, &mut rng);
    let mut model = assemble(data, mstep_with_ones(data, &ones, &beta)?);
    let mut logf = compute_log_f(data, &ones, &model);

    let mut trace = FitTrace {
        bounds: Vec::new(),
        iterations: 0,
        converged: false,
        k_history: Vec::new(),
        final_min_mean_mass: None,
    };
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..config.outer_max_iter {
        let est = fab_estep_inner(&logf, &beta, omega, config.inner_tol, config.inner_max_iter);
        beta = est.beta;

        let mean = beta.mean_masses();
        if mean.iter().any(|&m| m < config.delta) {
            let (b2, _, _) = truncate(&beta, &model, config.delta);
            beta = b2;
        }
        trace.final_min_mean_mass = Some(
            beta.mean_masses()
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        );
        trace.k_history.push(beta.n_regions());

        let parts = mstep_with_ones(data, &ones, &beta)?;
        model = assemble(data, parts);
        logf = compute_log_f(data, &ones, &model);
        let bound = fab_objective_from(&logf, &beta, omega);
        trace.bounds.push(bound);
        trace.iterations += 1;
        if (bound - prev).abs() / prev.abs().max(1.0) < config.outer_tol {
            trace.converged = true;
            break;
        }
        prev = bound;
    }
    Ok((model, trace))
}

/// Summary of one restart inside `fit_with_restarts`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RestartReport {
    pub restart: usize,
    pub k: usize,
    /// Total training error (sum form) used for winner selection.
    pub train_error: f64,
    pub wall_seconds: f64,
    pub converged: bool,
}

/// Runs `restarts` independent fits (seeds derived from `(seed, restart)`)
/// and keeps the one with the smallest training error; ties prefer fewer
/// regions, then the lower restart index.
pub fn fit_with_restarts(
    data: &BinarizedDataset,
    config: &FabConfig,
) -> Result<(SimplifiedModel, FitTrace, Vec<RestartReport>)> {
    config.validate()?;
    let runs: Vec<Result<(SimplifiedModel, FitTrace, RestartReport)>> = (0..config.restarts)
        .into_par_iter()
        .map(|m| {
            let cfg = FabConfig {
                seed: derive_seed(config.seed, m as u64),
                ..config.clone()
            };
            let started = Instant::now();
            let (model, trace) = fab_fit(data, &cfg)?;
            let train_error = model.model_error(data)?;
            let report = RestartReport {
                restart: m,
                k: model.n_regions(),
                train_error,
                wall_seconds: started.elapsed().as_secs_f64(),
                converged: trace.converged,
            };
            Ok((model, trace, report))
        })
        .collect();

    let mut best: Option<(SimplifiedModel, FitTrace)> = None;
    let mut best_key = (f64::INFINITY, usize::MAX);
    let mut reports = Vec::with_capacity(config.restarts);
    for run in runs {
        let (model, trace, report) = run?;
        let key = (report.train_error, report.k);
        if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
            best_key = key;
            best = Some((model, trace));
        }
        reports.push(report);
    }
    let (model, trace) = best.expect("restarts >= 1");
    Ok((model, trace, reports))
}

/// One row of the comparison report.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: String,
    pub k: usize,
    /// Mean training error.
    pub train_error: f64,
    /// Mean test error.
    pub test_error: f64,
    pub wall_seconds: f64,
    pub restarts: usize,
    pub seed: u64,
}

/// Fits once with shrinkage (restarts included) and once with an EM sweep
/// over `k_values` at the same restart count, reporting errors and wall
/// times per row.
pub fn compare_fab_em(
    train: &BinarizedDataset,
    test: &BinarizedDataset,
    config: &FabConfig,
    k_values: &[usize],
) -> Result<Vec<CompareRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(1 + k_values.len());

    let started = Instant::now();
    let (fab_model, _, _) = fit_with_restarts(train, config)?;
    let fab_wall = started.elapsed().as_secs_f64();
    rows.push(CompareRow {
        method: "fab".into(),
        k: fab_model.n_regions(),
        train_error: fab_model.mean_model_error(train)?,
        test_error: fab_model.mean_model_error(test)?,
        wall_seconds: fab_wall,
        restarts: config.restarts,
        seed: config.seed,
    });

    let entries = em_sweep(
        train,
        Some(test),
        k_values,
        config.restarts,
        derive_seed(config.seed, 0x00EA_5EED),
        config.outer_tol,
        config.outer_max_iter,
    )?;
    for e in entries {
        rows.push(CompareRow {
            method: "em".into(),
            k: e.k,
            train_error: e.train_error,
            test_error: e.test_error.unwrap(),
            wall_seconds: e.wall_seconds,
            restarts: e.restarts,
            seed: config.seed,
        });
    }
    Ok(rows)
}

/// Renders comparison rows as CSV with the fixed header.
pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("method,K,train_error,test_error,wall_seconds,restarts,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.k, r.train_error, r.test_error, r.wall_seconds, r.restarts, r.seed
        ));
    }
    out
}
