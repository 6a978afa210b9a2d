//! Command-line surface: generate data, train forests, simplify, predict,
//! evaluate, compare, and plot.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::binarizer::collect_statements;
use crate::data::{
    binarize_dataset, gen_synthetic1, gen_synthetic2, load_csv, save_csv, BinarizedDataset,
    CsvOptions, Dataset, TargetColumn,
};
use crate::em::{em_fit, FitTrace, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::ensemble::{load_ensemble, save_ensemble, train_forest, ForestParams, TreeEnsemble};
use crate::error::{Error, Result};
use crate::fab::{compare_csv, compare_fab_em, fit_with_restarts, CompareRow, FabConfig, RestartReport};
use crate::model::{load_model, save_model, SimplifiedModel};
use crate::plot::{svg_ensemble_plot, svg_rules_plot};
use crate::rules::{
    format_rules, format_rules_named, overlap_metric, rules_from_model, save_rules, RuleSet,
    RuleStyle,
};
use crate::util::derive_seed;
use crate::Task;

/// Default rounding threshold for rule extraction. Only statements whose
/// fitted bit probability is within `tau` of 0 or 1 become rule conditions;
/// thresholds interior to a region keep intermediate probabilities and stay
/// unconstrained, so extracted boxes track region boundaries instead of
/// collapsing toward per-region medians. Rounding at `tau` trims roughly a
/// `tau`-quantile strip from each region side, so the default stays small.
pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Parser)]
#[command(
    name = "treedefrag",
    version,
    about = "Defragment a decision-tree ensemble into a few interpretable rules"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as train/test CSV files
    Synth(SynthArgs),
    /// Train a bagged CART forest on a CSV dataset
    TrainForest(TrainForestArgs),
    /// Fit a small region model to an ensemble and emit model + rules
    Simplify(SimplifyArgs),
    /// Predict region and output for every row of a dataset
    Predict(PredictArgs),
    /// Evaluate a fitted model on a dataset
    Evaluate(EvaluateArgs),
    /// Compare the shrinkage fit against an EM sweep over region counts
    Compare(CompareArgs),
    /// Render a 2-D dataset with rule rectangles or ensemble cell lines
    Plot2d(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthName {
    Synthetic1,
    Synthetic2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetMode {
    /// Fit to the ensemble's own predictions (mimic the forest)
    Ensemble,
    /// Fit to the dataset's labels
    Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    Fab,
    Em,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SynthArgs {
    /// Which generator to run
    #[arg(value_enum)]
    pub name: SynthName,
    /// Rows per split
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Label flip probability
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for <name>_train.csv and <name>_test.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug, Clone)]
pub struct TrainForestArgs {
    /// Training CSV
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Classification)]
    pub task: TaskArg,
    /// Target column (name or 0-based index; default last column)
    #[arg(long)]
    pub target_column: Option<String>,
    /// Treat the first CSV row as data, not a header
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Maximum tree depth (unlimited when omitted)
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Fraction of features considered per split
    #[arg(long, default_value_t = 1.0)]
    pub feature_subsample: f64,
    /// Disable bootstrap sampling
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output ensemble file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
pub struct SimplifyArgs {
    /// Ensemble file to simplify
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Training CSV
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Output directory (model.json, rules.txt, rules.json, report.json)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial (maximum) region count
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    /// Mean-responsibility truncation threshold
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Rule rounding threshold
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// What the model is fitted to
    #[arg(long, value_enum, default_value_t = TargetMode::Ensemble)]
    pub target: TargetMode,
    #[arg(long, value_enum, default_value_t = FitMethod::Fab)]
    pub method: FitMethod,
    /// Fixed region count (required for --method em)
    #[arg(long)]
    pub k: Option<usize>,
    /// Keep duplicate statements from different tree nodes
    #[arg(long)]
    pub no_dedup: bool,
    /// Count C-1 free class parameters in the penalty weight
    #[arg(long, hide = true)]
    pub dim_phi_reduced: bool,
}

#[derive(clap::Args, Debug, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Output CSV of per-row region and prediction
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Also write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CompareArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Training CSV
    #[arg(long)]
    pub train: PathBuf,
    /// Test CSV
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Output CSV report
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// K_max for the shrinkage fit and upper end of the EM sweep
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    /// Lower end of the EM sweep
    #[arg(long, default_value_t = 1)]
    pub em_kmin: usize,
    /// Restarts for both methods
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = TargetMode::Ensemble)]
    pub target: TargetMode,
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(clap::Args, Debug, Clone)]
pub struct PlotArgs {
    /// Model file (rule rectangles)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Ensemble file (cell boundary lines)
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Trees to draw in ensemble mode
    #[arg(long, default_value_t = 5)]
    pub trees: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Output SVG file
    #[arg(long)]
    pub out: PathBuf,
}

fn target_column(from: &Option<String>) -> TargetColumn {
    match from {
        None => TargetColumn::Last,
        Some(s) => match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.clone()),
        },
    }
}

fn load_dataset(
    path: &Path,
    task: Task,
    target: &Option<String>,
    no_header: bool,
) -> Result<Dataset> {
    load_csv(
        path,
        &CsvOptions {
            has_header: !no_header,
            target_column: target_column(target),
            task,
        },
    )
}

/// Binarizes `data` against the ensemble's statement table, swapping in the
/// ensemble's own predictions as targets when asked to mimic.
fn prepare_fit_input(
    ensemble: &TreeEnsemble,
    data: &Dataset,
    target: TargetMode,
    dedup: bool,
) -> Result<(BinarizedDataset, usize)> {
    if data.n_features() != ensemble.n_features {
        return Err(Error::TaskMismatch(format!(
            "dataset has {} features but ensemble expects {}",
            data.n_features(),
            ensemble.n_features
        )));
    }
    let raw = ensemble.internal_node_count();
    let table = collect_statements(ensemble, dedup);
    if table.is_empty() {
        eprintln!("warning: ensemble has no internal nodes; statement table is empty");
    } else if dedup && table.len() < raw {
        eprintln!(
            "note: deduplicated {raw} internal-node statements to {} table entries \
             (--no-dedup keeps duplicates)",
            table.len()
        );
    }
    let mut bin = binarize_dataset(data, &table)?;
    if target == TargetMode::Ensemble {
        bin.targets = ensemble.predict_targets(data)?;
    }
    Ok((bin, raw))
}

/// Report written by `cmd_simplify` next to the model and rule files.
#[derive(Debug, Clone, Serialize)]
pub struct SimplifyReport {
    pub method: String,
    pub target: String,
    pub seed: u64,
    pub k_max: usize,
    pub restarts: usize,
    pub delta: f64,
    pub tau: f64,
    pub n_train: usize,
    pub n_statements: usize,
    pub n_statements_raw: usize,
    pub k: usize,
    /// Training error against the fit targets (sum form).
    pub train_error: f64,
    /// Training error against the fit targets, divided by n.
    pub train_error_mean: f64,
    /// Mean training error against the dataset's labels.
    pub train_error_mean_vs_labels: f64,
    pub converged: bool,
    pub wall_seconds: f64,
    pub restart_summary: Vec<RestartReport>,
}

/// Everything `cmd_simplify` produced.
#[derive(Debug)]
pub struct SimplifyOutcome {
    pub model: SimplifiedModel,
    pub rules: RuleSet,
    pub report: SimplifyReport,
    pub model_path: PathBuf,
    pub rules_text_path: PathBuf,
    pub rules_json_path: PathBuf,
    pub report_path: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<[PathBuf; 2]> {
    let gen = |n, noise, seed| match args.name {
        SynthName::Synthetic1 => gen_synthetic1(n, noise, seed),
        SynthName::Synthetic2 => gen_synthetic2(n, noise, seed),
    };
    let prefix = match args.name {
        SynthName::Synthetic1 => "synthetic1",
        SynthName::Synthetic2 => "synthetic2",
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let train = gen(args.n, args.noise, derive_seed(args.seed, 0));
    let test = gen(args.n, args.noise, derive_seed(args.seed, 1));
    let train_path = args.out.join(format!("{prefix}_train.csv"));
    let test_path = args.out.join(format!("{prefix}_test.csv"));
    save_csv(&train, &train_path)?;
    save_csv(&test, &test_path)?;
    Ok([train_path, test_path])
}

pub fn cmd_train_forest(args: &TrainForestArgs) -> Result<PathBuf> {
    let data = load_dataset(&args.data, args.task.into(), &args.target_column, args.no_header)?;
    let params = ForestParams {
        n_trees: args.trees,
        max_depth: args.max_depth,
        min_leaf: args.min_leaf,
        feature_subsample: args.feature_subsample,
        bootstrap: !args.no_bootstrap,
    };
    let ensemble = train_forest(&data, &params, args.seed)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    save_ensemble(&ensemble, &args.out)?;
    Ok(args.out.clone())
}

pub fn cmd_simplify(args: &SimplifyArgs) -> Result<SimplifyOutcome> {
    let started = Instant::now();
    let ensemble = load_ensemble(&args.ensemble)?;
    let data = load_dataset(&args.data, ensemble.task, &args.target_column, args.no_header)?;
    let (bin, raw_statements) =
        prepare_fit_input(&ensemble, &data, args.target, !args.no_dedup)?;

    let (model, trace, restart_summary): (SimplifiedModel, FitTrace, Vec<RestartReport>) =
        match args.method {
            FitMethod::Fab => {
                let config = FabConfig {
                    k_max: args.kmax,
                    delta: args.delta,
                    restarts: args.restarts,
                    seed: args.seed,
                    reduced_class_params: args.dim_phi_reduced,
                    ..FabConfig::default()
                };
                fit_with_restarts(&bin, &config)?
            }
            FitMethod::Em => {
                let k = args.k.ok_or_else(|| {
                    Error::Invalid("--method em requires --k <region count>".into())
                })?;
                let runs: Vec<Result<(SimplifiedModel, FitTrace, RestartReport)>> = (0
                    ..args.restarts)
                    .into_par_iter()
                    .map(|m| {
                        let t0 = Instant::now();
                        let (model, trace) = em_fit(
                            &bin,
                            k,
                            derive_seed(args.seed, m as u64),
                            DEFAULT_TOL,
                            DEFAULT_MAX_ITER,
                        )?;
                        let train_error = model.model_error(&bin)?;
                        let report = RestartReport {
                            restart: m,
                            k,
                            train_error,
                            wall_seconds: t0.elapsed().as_secs_f64(),
                            converged: trace.converged,
                        };
                        Ok((model, trace, report))
                    })
                    .collect();
                let mut best: Option<(SimplifiedModel, FitTrace)> = None;
                let mut best_err = f64::INFINITY;
                let mut reports = Vec::new();
                for run in runs {
                    let (model, trace, report) = run?;
                    if report.train_error < best_err {
                        best_err = report.train_error;
                        best = Some((model, trace));
                    }
                    reports.push(report);
                }
                let (model, trace) = best.expect("restarts >= 1");
                (model, trace, reports)
            }
        };

    let rules = rules_from_model(&model, args.tau)?;
    for rule in &rules.rules {
        if !rule.dropped_features.is_empty() {
            eprintln!(
                "warning: rounded statements contradict on features {:?}; constraints dropped",
                rule.dropped_features
            );
        }
    }

    let train_error = model.model_error(&bin)?;
    let labels_bin = BinarizedDataset {
        rows: bin.rows.clone(),
        targets: data.targets.clone(),
        table: bin.table.clone(),
    };
    let report = SimplifyReport {
        method: format!("{:?}", args.method).to_lowercase(),
        target: format!("{:?}", args.target).to_lowercase(),
        seed: args.seed,
        k_max: args.kmax,
        restarts: args.restarts,
        delta: args.delta,
        tau: args.tau,
        n_train: bin.n_rows(),
        n_statements: bin.n_statements(),
        n_statements_raw: raw_statements,
        k: model.n_regions(),
        train_error,
        train_error_mean: train_error / bin.n_rows().max(1) as f64,
        train_error_mean_vs_labels: model.mean_model_error(&labels_bin)?,
        converged: trace.converged,
        wall_seconds: started.elapsed().as_secs_f64(),
        restart_summary,
    };

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let model_path = args.out.join("model.json");
    let rules_text_path = args.out.join("rules.txt");
    let rules_json_path = args.out.join("rules.json");
    let report_path = args.out.join("report.json");
    save_model(&model, &model_path)?;
    fs::write(
        &rules_text_path,
        format_rules_named(&rules, RuleStyle::Text, data.column_names.as_deref()),
    )
    .map_err(|e| Error::io(&rules_text_path, e))?;
    save_rules(&rules, &rules_json_path)?;
    let mut report_json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Invalid(e.to_string()))?;
    report_json.push('\n');
    fs::write(&report_path, report_json).map_err(|e| Error::io(&report_path, e))?;

    Ok(SimplifyOutcome {
        model,
        rules,
        report,
        model_path,
        rules_text_path,
        rules_json_path,
        report_path,
    })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<PathBuf> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data, model.task, &args.target_column, args.no_header)?;
    let bin = binarize_dataset(&data, &model.table)?;
    let mut out = String::from("row,region,prediction\n");
    for (i, row) in bin.rows.iter().enumerate() {
        let (k, y) = model.predict(row);
        out.push_str(&format!("{i},{k},{y}\n"));
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    Ok(args.out.clone())
}

/// Metrics emitted by `cmd_evaluate`.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub n: usize,
    pub k: usize,
    /// Mean error against the dataset's labels.
    pub error: f64,
    /// Mean number of rules covering each row.
    pub overlap: f64,
    /// Rows covered by each rule, in region order.
    pub per_rule_coverage: Vec<usize>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateReport> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data, model.task, &args.target_column, args.no_header)?;
    let bin = binarize_dataset(&data, &model.table)?;
    let rules = rules_from_model(&model, args.tau)?;
    let per_rule: Vec<usize> = rules
        .rules
        .iter()
        .map(|rule| {
            data.x
                .iter()
                .filter(|x| crate::rules::rule_covers(rule, x))
                .count()
        })
        .collect();
    let report = EvaluateReport {
        n: data.n_rows(),
        k: model.n_regions(),
        error: model.mean_model_error(&bin)?,
        overlap: overlap_metric(&rules, &data.x)?,
        per_rule_coverage: per_rule,
    };
    let mut text =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Invalid(e.to_string()))?;
    text.push('\n');
    if let Some(out) = &args.out {
        fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    }
    println!("{text}");
    Ok(report)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<Vec<CompareRow>> {
    if args.em_kmin == 0 || args.em_kmin > args.kmax {
        return Err(Error::Invalid(format!(
            "EM sweep range {}..={} is empty",
            args.em_kmin, args.kmax
        )));
    }
    let ensemble = load_ensemble(&args.ensemble)?;
    let train = load_dataset(&args.train, ensemble.task, &args.target_column, args.no_header)?;
    let test = load_dataset(&args.test, ensemble.task, &args.target_column, args.no_header)?;
    let (train_bin, _) = prepare_fit_input(&ensemble, &train, args.target, !args.no_dedup)?;
    // Test error is always measured against the test labels.
    let test_bin = binarize_dataset(&test, &train_bin.table)?;

    let config = FabConfig {
        k_max: args.kmax,
        delta: args.delta,
        restarts: args.restarts,
        seed: args.seed,
        ..FabConfig::default()
    };
    let k_values: Vec<usize> = (args.em_kmin..=args.kmax).collect();
    let rows = compare_fab_em(&train_bin, &test_bin, &config, &k_values)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(&args.out, compare_csv(&rows)).map_err(|e| Error::io(&args.out, e))?;
    Ok(rows)
}

pub fn cmd_plot2d(args: &PlotArgs) -> Result<PathBuf> {
    let svg = match (&args.model, &args.ensemble) {
        (Some(model_path), None) => {
            let model = load_model(model_path)?;
            let data = load_dataset(&args.data, model.task, &args.target_column, args.no_header)?;
            let rules = rules_from_model(&model, args.tau)?;
            svg_rules_plot(&data, &rules)?
        }
        (None, Some(ens_path)) => {
            let ensemble = load_ensemble(ens_path)?;
            let data =
                load_dataset(&args.data, ensemble.task, &args.target_column, args.no_header)?;
            svg_ensemble_plot(&data, &ensemble, args.trees)?
        }
        _ => {
            return Err(Error::Invalid(
                "plot2d needs exactly one of --model or --ensemble".into(),
            ))
        }
    };
    fs::write(&args.out, svg).map_err(|e| Error::io(&args.out, e))?;
    Ok(args.out.clone())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth(args) => {
            let [train, test] = cmd_synth(args)?;
            println!("wrote {} and {}", train.display(), test.display());
        }
        Command::TrainForest(args) => {
            let path = cmd_train_forest(args)?;
            println!("wrote {}", path.display());
        }
        Command::Simplify(args) => {
            let outcome = cmd_simplify(args)?;
            println!(
                "selected {} regions; mean training error {:.6} ({} mode); wrote {}",
                outcome.report.k,
                outcome.report.train_error_mean,
                outcome.report.target,
                outcome.model_path.display()
            );
            print!("{}", format_rules(&outcome.rules, RuleStyle::Text));
        }
        Command::Predict(args) => {
            let path = cmd_predict(args)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate(args) => {
            cmd_evaluate(args)?;
        }
        Command::Compare(args) => {
            let rows = cmd_compare(args)?;
            print!("{}", compare_csv(&rows));
            println!("wrote {}", args.out.display());
        }
        Command::Plot2d(args) => {
            let path = cmd_plot2d(args)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_column_parses_index_and_name() {
        assert!(matches!(target_column(&None), TargetColumn::Last));
        assert!(matches!(
            target_column(&Some("3".into())),
            TargetColumn::Index(3)
        ));
        assert!(matches!(
            target_column(&Some("label".into())),
            TargetColumn::Name(_)
        ));
    }

    #[test]
    fn cli_parses_simplify_flags() {
        let cli = Cli::try_parse_from([
            "treedefrag",
            "simplify",
            "--ensemble",
            "f.json",
            "--data",
            "d.csv",
            "--out",
            "outdir",
            "--kmax",
            "7",
            "--restarts",
            "3",
            "--delta",
            "0.01",
            "--tau",
            "0.1",
            "--method",
            "em",
            "--k",
            "4",
            "--no-dedup",
            "--target",
            "label",
        ])
        .unwrap();
        match cli.command {
            Command::Simplify(args) => {
                assert_eq!(args.kmax, 7);
                assert_eq!(args.restarts, 3);
                assert_eq!(args.delta, 0.01);
                assert_eq!(args.tau, 0.1);
                assert_eq!(args.method, FitMethod::Em);
                assert_eq!(args.k, Some(4));
                assert!(args.no_dedup);
                assert_eq!(args.target, TargetMode::Label);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn simplify_defaults_match_documented_pipeline() {
        let cli = Cli::try_parse_from([
            "treedefrag",
            "simplify",
            "--ensemble",
            "f.json",
            "--data",
            "d.csv",
            "--out",
            "o",
        ])
        .unwrap();
        match cli.command {
            Command::Simplify(args) => {
                assert_eq!(args.kmax, 10);
                assert_eq!(args.restarts, 20);
                assert_eq!(args.delta, 1e-3);
                assert_eq!(args.tau, DEFAULT_TAU);
                assert_eq!(args.seed, 0);
                assert_eq!(args.method, FitMethod::Fab);
                assert_eq!(args.target, TargetMode::Ensemble);
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
