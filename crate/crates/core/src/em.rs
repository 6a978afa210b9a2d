//! Maximum-likelihood fitting at fixed region count.
//!
//! Alternates a softmax E-step with closed-form weighted-average parameter
//! updates, tracking a lower bound on the data log-likelihood that is
//! non-decreasing across iterations. Also hosts the pieces shared with the
//! shrinkage fitter: the joint log-factor matrix, the M-step, and the
//! responsibility container.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{BinarizedDataset, Targets};
use crate::error::{Error, Result};
use crate::model::{
    log_clipped, log_normal, MixtureWeights, OutputModel, RegionModel, SimplifiedModel,
    LAMBDA_FLOOR, PROB_CLIP, VARIANCE_FLOOR,
};
use crate::util::{derive_seed, logsumexp, substream};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 300;

/// Row-stochastic N x K matrix of posterior region memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_regions: usize,
}

impl ResponsibilityMatrix {
    pub fn new(n_rows: usize, n_regions: usize) -> Self {
        ResponsibilityMatrix {
            values: vec![0.0; n_rows * n_regions],
            n_rows,
            n_regions,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_regions..(n + 1) * self.n_regions]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.n_regions..(n + 1) * self.n_regions]
    }

    /// Per-region total responsibility mass.
    pub fn column_masses(&self) -> Vec<f64> {
        let mut masses = vec![0.0; self.n_regions];
        for n in 0..self.n_rows {
            for (k, &b) in self.row(n).iter().enumerate() {
                masses[k] += b;
            }
        }
        masses
    }

    /// Column masses divided by the row count.
    pub fn mean_masses(&self) -> Vec<f64> {
        self.column_masses()
            .into_iter()
            .map(|m| m / self.n_rows as f64)
            .collect()
    }

    /// Largest absolute entry difference between two matrices of equal shape.
    pub fn max_abs_diff(&self, other: &ResponsibilityMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Draws each row from a symmetric Dirichlet(1) (normalized
    /// exponentials), the random initialization used by both fitters.
    pub fn random_dirichlet(
        n_rows: usize,
        n_regions: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        use rand::Rng;
        let mut m = ResponsibilityMatrix::new(n_rows, n_regions);
        for n in 0..n_rows {
            let row = m.row_mut(n);
            let mut sum = 0.0;
            for b in row.iter_mut() {
                // -ln(1-u) is Exp(1); u in [0,1) keeps the argument positive.
                let u: f64 = rng.gen();
                *b = -(1.0 - u).ln();
                sum += *b;
            }
            for b in row.iter_mut() {
                *b /= sum;
            }
        }
        m
    }
}

/// Per-iteration objective values and convergence bookkeeping from a fit.
#[derive(Debug, Clone)]
pub struct FitTrace {
    /// Lower-bound value after each outer iteration.
    pub bounds: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Active region count after each outer iteration (constant for EM).
    pub k_history: Vec<usize>,
    /// Smallest surviving mean responsibility observed at the final
    /// truncation check (shrinkage fits only).
    pub final_min_mean_mass: Option<f64>,
}

impl FitTrace {
    fn new() -> Self {
        FitTrace {
            bounds: Vec::new(),
            iterations: 0,
            converged: false,
            k_history: Vec::new(),
            final_min_mean_mass: None,
        }
    }
}

/// N x K matrix (row-major) of log p(y|k) + log p(s|k) + log alpha_k.
pub(crate) fn compute_log_f(
    data: &BinarizedDataset,
    ones: &[Vec<u32>],
    model: &SimplifiedModel,
) -> Vec<f64> {
    let n = data.n_rows();
    let k = model.n_regions();
    let l = model.n_statements();

    // Bit model in base + logit form: log p(s|k) = base_k + sum_{l: s_l=1} w_kl.
    let mut base = vec![0.0; k];
    let mut w = vec![0.0; l * k]; // statement-major for the inner loop
    for (j, row) in model.regions.eta.iter().enumerate() {
        for (li, &p) in row.iter().enumerate() {
            base[j] += (1.0 - p).ln();
            w[li * k + j] = p.ln() - (1.0 - p).ln();
        }
    }
    let log_alpha: Vec<f64> = model.weights.alpha.iter().map(|&a| log_clipped(a)).collect();

    let mut out = vec![0.0; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(row_i, acc)| {
        for j in 0..k {
            acc[j] = base[j] + log_alpha[j];
        }
        for &li in &ones[row_i] {
            let wrow = &w[li as usize * k..(li as usize + 1) * k];
            for j in 0..k {
                acc[j] += wrow[j];
            }
        }
        match &data.targets {
            Targets::Regression(ys) => {
                let y = ys[row_i];
                if let OutputModel::Regression { mu, lambda } = &model.output {
                    for j in 0..k {
                        acc[j] += log_normal(y, mu[j], lambda[j]);
                    }
                }
            }
            Targets::Classification { labels, .. } => {
                let c = labels[row_i];
                if let OutputModel::Classification { gamma } = &model.output {
                    for j in 0..k {
                        acc[j] += log_clipped(gamma[j][c]);
                    }
                }
            }
        }
    });
    out
}

/// Row softmax of `logf - penalties`, one penalty per region.
pub(crate) fn responsibilities_from(
    logf: &[f64],
    n_rows: usize,
    n_regions: usize,
    penalties: &[f64],
) -> ResponsibilityMatrix {
    let mut beta = ResponsibilityMatrix::new(n_rows, n_regions);
    for n in 0..n_rows {
        let src = &logf[n * n_regions..(n + 1) * n_regions];
        let dst = beta.row_mut(n);
        let mut m = f64::NEG_INFINITY;
        for k in 0..n_regions {
            dst[k] = src[k] - penalties[k];
            m = m.max(dst[k]);
        }
        let mut sum = 0.0;
        for v in dst.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in dst.iter_mut() {
            *v /= sum;
        }
    }
    beta
}

/// Expected complete-data log-likelihood sum beta * logf.
pub(crate) fn weighted_loglik(beta: &ResponsibilityMatrix, logf: &[f64]) -> f64 {
    let mut total = 0.0;
    for n in 0..beta.n_rows() {
        let row = beta.row(n);
        let src = &logf[n * beta.n_regions()..(n + 1) * beta.n_regions()];
        for (b, f) in row.iter().zip(src) {
            total += b * f;
        }
    }
    total
}

/// Entropy of the responsibility rows, with 0 log 0 = 0.
pub(crate) fn entropy(beta: &ResponsibilityMatrix) -> f64 {
    let mut h = 0.0;
    for n in 0..beta.n_rows() {
        for &b in beta.row(n) {
            if b > 0.0 {
                h -= b * b.ln();
            }
        }
    }
    h
}

/// Posterior responsibilities under the current parameters: row-normalized
/// softmax of the joint log factors.
pub fn em_estep(data: &BinarizedDataset, model: &SimplifiedModel) -> ResponsibilityMatrix {
    let ones = data.ones();
    let logf = compute_log_f(data, &ones, model);
    responsibilities_from(&logf, data.n_rows(), model.n_regions(), &vec![0.0; model.n_regions()])
}

/// Closed-form parameter update from responsibilities, shared by both
/// fitters: responsibility-weighted means, variances, bit frequencies, and
/// mixture weights.
///
/// Errors if any region carries zero mass; callers truncate or re-seed first.
pub fn mstep(
    data: &BinarizedDataset,
    beta: &ResponsibilityMatrix,
) -> Result<(OutputModel, RegionModel, MixtureWeights)> {
    let ones = data.ones();
    mstep_with_ones(data, &ones, beta)
}

pub(crate) fn mstep_with_ones(
    data: &BinarizedDataset,
    ones: &[Vec<u32>],
    beta: &ResponsibilityMatrix,
) -> Result<(OutputModel, RegionModel, MixtureWeights)> {
    let n = data.n_rows();
    let k = beta.n_regions();
    let l = data.n_statements();
    if beta.n_rows() != n {
        return Err(Error::Invalid(format!(
            "responsibility rows {} != data rows {n}",
            beta.n_rows()
        )));
    }

    let masses = beta.column_masses();
    if let Some(j) = masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::Invalid(format!(
            "region {j} has zero responsibility mass"
        )));
    }

    // Bit frequencies, statement-major accumulator.
    let mut num = vec![0.0; l * k];
    for row_i in 0..n {
        let brow = beta.row(row_i);
        for &li in &ones[row_i] {
            let dst = &mut num[li as usize * k..(li as usize + 1) * k];
            for j in 0..k {
                dst[j] += brow[j];
            }
        }
    }
    let eta: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..l)
                .map(|li| (num[li * k + j] / masses[j]).clamp(PROB_CLIP, 1.0 - PROB_CLIP))
                .collect()
        })
        .collect();

    let alpha: Vec<f64> = masses.iter().map(|&m| m / n as f64).collect();

    let output = match &data.targets {
        Targets::Regression(ys) => {
            let mut mu = vec![0.0; k];
            for row_i in 0..n {
                let brow = beta.row(row_i);
                for j in 0..k {
                    mu[j] += brow[j] * ys[row_i];
                }
            }
            for j in 0..k {
                mu[j] /= masses[j];
            }
            let mut wssd = vec![0.0; k];
            for row_i in 0..n {
                let brow = beta.row(row_i);
                for j in 0..k {
                    let d = ys[row_i] - mu[j];
                    wssd[j] += brow[j] * d * d;
                }
            }
            let lambda: Vec<f64> = (0..k)
                .map(|j| {
                    let var = (wssd[j] / masses[j]).max(VARIANCE_FLOOR);
                    (1.0 / var).max(LAMBDA_FLOOR)
                })
                .collect();
            OutputModel::Regression { mu, lambda }
        }
        Targets::Classification {
            labels, n_classes, ..
        } => {
            let c = *n_classes;
            let mut counts = vec![0.0; k * c];
            for row_i in 0..n {
                let brow = beta.row(row_i);
                let y = labels[row_i];
                for j in 0..k {
                    counts[j * c + y] += brow[j];
                }
            }
            let gamma: Vec<Vec<f64>> = (0..k)
                .map(|j| (0..c).map(|ci| counts[j * c + ci] / masses[j]).collect())
                .collect();
            OutputModel::Classification { gamma }
        }
    };

    Ok((output, RegionModel { eta }, MixtureWeights { alpha }))
}

/// The EM objective: expected complete-data log-likelihood plus the entropy
/// of the responsibilities. At the E-step optimum this equals the data
/// log-likelihood.
pub fn em_lower_bound(
    data: &BinarizedDataset,
    model: &SimplifiedModel,
    beta: &ResponsibilityMatrix,
) -> f64 {
    let ones = data.ones();
    let logf = compute_log_f(data, &ones, model);
    weighted_loglik(beta, &logf) + entropy(beta)
}

pub(crate) fn assemble(
    data: &BinarizedDataset,
    parts: (OutputModel, RegionModel, MixtureWeights),
) -> SimplifiedModel {
    SimplifiedModel {
        task: data.task(),
        output: parts.0,
        regions: parts.1,
        weights: parts.2,
        table: data.table.clone(),
    }
}

/// Re-seeds zero-mass regions from the worst-fit rows so the fixed-K
/// semantics survive; returns true if anything changed.
fn reseed_empty_regions(beta: &mut ResponsibilityMatrix, logf: &[f64]) -> bool {
    let masses = beta.column_masses();
    let empty: Vec<usize> = (0..beta.n_regions())
        .filter(|&j| masses[j] <= 0.0)
        .collect();
    if empty.is_empty() {
        return false;
    }
    let k = beta.n_regions();
    let mut fit: Vec<(usize, f64)> = (0..beta.n_rows())
        .map(|n| (n, logsumexp(&logf[n * k..(n + 1) * k])))
        .collect();
    fit.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (i, &j) in empty.iter().enumerate() {
        let row = beta.row_mut(fit[i % fit.len()].0);
        row.iter_mut().for_each(|b| *b = 0.0);
        row[j] = 1.0;
    }
    true
}

/// Fits a K-region model by EM from a random responsibility initialization.
///
/// Stops when the relative bound change falls below `tol` or after
/// `max_iter` iterations; non-convergence is reported through the trace.
pub fn em_fit(
    data: &BinarizedDataset,
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<(SimplifiedModel, FitTrace)> {
    if k == 0 {
        return Err(Error::Invalid("region count must be at least 1".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::Invalid("cannot fit an empty dataset".into()));
    }
    let ones = data.ones();
    let mut rng = substream(seed, 0);
    let mut beta = ResponsibilityMatrix::random_dirichlet(data.n_rows(), k, &mut rng);
    let mut model = assemble(data, mstep_with_ones(data, &ones, &beta)?);
    let mut logf = compute_log_f(data, &ones, &model);

    let mut trace = FitTrace::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        beta = responsibilities_from(&logf, data.n_rows(), k, &vec![0.0; k]);
        reseed_empty_regions(&mut beta, &logf);
        let parts = mstep_with_ones(data, &ones, &beta)?;
        model = assemble(data, parts);
        logf = compute_log_f(data, &ones, &model);
        let bound = weighted_loglik(&beta, &logf) + entropy(&beta);
        trace.bounds.push(bound);
        trace.k_history.push(k);
        trace.iterations += 1;
        if (bound - prev).abs() / prev.abs().max(1.0) < tol {
            trace.converged = true;
            break;
        }
        prev = bound;
    }
    Ok((model, trace))
}

/// One row of an `em_sweep` report.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub k: usize,
    pub model: SimplifiedModel,
    /// Mean training error of the best restart.
    pub train_error: f64,
    /// Mean test error of the best restart, when test data was supplied.
    pub test_error: Option<f64>,
    pub wall_seconds: f64,
    pub restarts: usize,
}

/// Runs `em_fit` for every K in `k_values` with `restarts` independent
/// initializations each (restart seeds derive from `(seed, k, restart)`),
/// keeping the lowest-training-error model per K.
pub fn em_sweep(
    train: &BinarizedDataset,
    test: Option<&BinarizedDataset>,
    k_values: &[usize],
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<SweepEntry>> {
    if restarts == 0 {
        return Err(Error::Invalid("restarts must be at least 1".into()));
    }
    let mut entries = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let started = Instant::now();
        let fits: Vec<Result<(SimplifiedModel, f64)>> = (0..restarts)
            .into_par_iter()
            .map(|m| {
                let run_seed = derive_seed(seed, ((k as u64) << 32) | m as u64);
                let (model, _) = em_fit(train, k, run_seed, tol, max_iter)?;
                let err = model.model_error(train)?;
                Ok((model, err))
            })
            .collect();
        let mut best: Option<(SimplifiedModel, f64)> = None;
        for fit in fits {
            let (model, err) = fit?;
            if best.as_ref().map_or(true, |(_, e)| err < *e) {
                best = Some((model, err));
            }
        }
        let (model, err) = best.expect("restarts >= 1");
        let test_error = match test {
            Some(t) => Some(model.mean_model_error(t)?),
            None => None,
        };
        entries.push(SweepEntry {
            k,
            train_error: err / train.n_rows() as f64,
            test_error,
            wall_seconds: started.elapsed().as_secs_f64(),
            model,
            restarts,
        });
    }
    Ok(entries)
}
