//! Dataset ingestion, synthetic generators, and binarization.

use std::path::Path;

use rand::Rng;

use crate::binarizer::{binarize, BinaryFeature, StatementTable};
use crate::error::{Error, Result};
use crate::util::substream;
use crate::Task;

/// Fit targets: numeric values for regression, class indices for
/// classification (expanded to one-hot only where a likelihood needs it).
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification {
        labels: Vec<usize>,
        n_classes: usize,
        /// Original label text per class index, in dictionary order.
        class_names: Vec<String>,
    },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification { .. } => Task::Classification,
        }
    }

    fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Regression(y) => {
                Targets::Regression(indices.iter().map(|&i| y[i]).collect())
            }
            Targets::Classification {
                labels,
                n_classes,
                class_names,
            } => Targets::Classification {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
                class_names: class_names.clone(),
            },
        }
    }
}

/// An in-memory tabular dataset: row-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub targets: Targets,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, |row| row.len())
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }
}

/// How to find the target column in a CSV file.
#[derive(Debug, Clone)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
    Last,
}

/// Options for `load_csv`.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    pub target_column: TargetColumn,
    pub task: Task,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            target_column: TargetColumn::Last,
            task: Task::Classification,
        }
    }
}

/// Loads a numeric CSV with one target column.
///
/// Classification targets are mapped through a stable label dictionary:
/// numeric labels sort numerically, anything else lexicographically.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;

    let headers: Option<Vec<String>> = if options.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::parse(path, e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        raw_rows.push(record.iter().map(str::to_string).collect());
    }
    if raw_rows.is_empty() {
        return Err(Error::parse(path, "no data rows"));
    }

    let width = raw_rows[0].len();
    if width < 2 {
        return Err(Error::parse(path, "need at least one feature and one target column"));
    }
    let target_idx = match &options.target_column {
        TargetColumn::Index(i) => *i,
        TargetColumn::Last => width - 1,
        TargetColumn::Name(name) => headers
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::parse(path, format!("no column named {name:?}")))?,
    };
    if target_idx >= width {
        return Err(Error::parse(
            path,
            format!("target column {target_idx} out of range (width {width})"),
        ));
    }

    let mut x = Vec::with_capacity(raw_rows.len());
    let mut raw_targets = Vec::with_capacity(raw_rows.len());
    for (i, row) in raw_rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Csv {
                row: i + 1,
                column: row.len(),
                message: format!("ragged row: expected {width} fields, got {}", row.len()),
            });
        }
        let mut features = Vec::with_capacity(width - 1);
        for (j, cell) in row.iter().enumerate() {
            if j == target_idx {
                raw_targets.push(cell.clone());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row: i + 1,
                column: j + 1,
                message: format!("non-numeric feature cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: i + 1,
                    column: j + 1,
                    message: "non-finite feature value".into(),
                });
            }
            features.push(v);
        }
        x.push(features);
    }

    let targets = match options.task {
        Task::Regression => {
            let mut y = Vec::with_capacity(raw_targets.len());
            for (i, cell) in raw_targets.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                    row: i + 1,
                    column: target_idx + 1,
                    message: format!("non-numeric target cell {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        row: i + 1,
                        column: target_idx + 1,
                        message: "non-finite target value".into(),
                    });
                }
                y.push(v);
            }
            Targets::Regression(y)
        }
        Task::Classification => {
            let mut class_names: Vec<String> =
                raw_targets.iter().map(|s| s.trim().to_string()).collect();
            class_names.sort();
            class_names.dedup();
            // Numeric labels order numerically ("2" before "10").
            if class_names.iter().all(|s| s.parse::<f64>().is_ok()) {
                class_names.sort_by(|a, b| {
                    a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap())
                });
            }
            let labels = raw_targets
                .iter()
                .map(|s| {
                    let t = s.trim();
                    class_names.iter().position(|c| c == t).unwrap()
                })
                .collect();
            Targets::Classification {
                labels,
                n_classes: class_names.len(),
                class_names,
            }
        }
    };

    let column_names = headers.map(|h| {
        h.into_iter()
            .enumerate()
            .filter_map(|(j, name)| (j != target_idx).then_some(name))
            .collect()
    });

    Ok(Dataset {
        x,
        targets,
        column_names,
    })
}

/// Writes a dataset as CSV with a header; floats use the shortest
/// representation that round-trips exactly.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let d = data.n_features();
    let mut header: Vec<String> = match &data.column_names {
        Some(names) if names.len() == d => names.clone(),
        _ => (0..d).map(|j| format!("x{j}")).collect(),
    };
    header.push("y".into());
    writer
        .write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for (i, row) in data.x.iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let target = match &data.targets {
            Targets::Regression(y) => format!("{}", y[i]),
            Targets::Classification {
                labels, class_names, ..
            } => class_names[labels[i]].clone(),
        };
        record.push(target);
        writer
            .write_record(&record)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn xor_label(a: bool, b: bool) -> usize {
    usize::from(a ^ b)
}

fn labelled_2d(points: Vec<[f64; 2]>, labels: Vec<usize>) -> Dataset {
    Dataset {
        x: points.into_iter().map(|p| p.to_vec()).collect(),
        targets: Targets::Classification {
            labels,
            n_classes: 2,
            class_names: vec!["0".into(), "1".into()],
        },
        column_names: Some(vec!["x1".into(), "x2".into()]),
    }
}

/// Two uniform features on [0,1]; the clean label is XOR(x1 > 0.5, x2 > 0.5)
/// and each label flips independently with probability `noise_rate`.
pub fn gen_synthetic1(n: usize, noise_rate: f64, seed: u64) -> Dataset {
    let mut rng = substream(seed, 0);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.gen();
        let x2: f64 = rng.gen();
        let flip = rng.gen::<f64>() < noise_rate;
        points.push([x1, x2]);
        labels.push(xor_label(xor_label(x1 > 0.5, x2 > 0.5) == 1, flip));
    }
    labelled_2d(points, labels)
}

/// The sigmoid-plus-cosine class boundary of the second synthetic dataset.
pub fn synthetic2_boundary(x1: f64) -> f64 {
    0.25 + 0.5 / (1.0 + (-20.0 * (x1 - 0.5)).exp()) + 0.05 * (2.0 * std::f64::consts::PI * x1).cos()
}

/// Two uniform features on [0,1]; the clean label is
/// `x2 > synthetic2_boundary(x1)`, flipped with probability `noise_rate`.
pub fn gen_synthetic2(n: usize, noise_rate: f64, seed: u64) -> Dataset {
    let mut rng = substream(seed, 0);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.gen();
        let x2: f64 = rng.gen();
        let flip = rng.gen::<f64>() < noise_rate;
        points.push([x1, x2]);
        labels.push(xor_label(x2 > synthetic2_boundary(x1), flip));
    }
    labelled_2d(points, labels)
}

/// Deterministic shuffled split into `floor(fraction * n)` training rows and
/// the rest as test rows; disjoint and exhaustive.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = data.n_rows();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, 1);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (fraction * n as f64).floor() as usize;
    let (train_idx, test_idx) = indices.split_at(n_train);
    let take = |idx: &[usize]| Dataset {
        x: idx.iter().map(|&i| data.x[i].clone()).collect(),
        targets: data.targets.select(idx),
        column_names: data.column_names.clone(),
    };
    Ok((take(train_idx), take(test_idx)))
}

/// Rows of binary features plus targets; the input to model fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedDataset {
    pub rows: Vec<BinaryFeature>,
    pub targets: Targets,
    pub table: StatementTable,
}

impl BinarizedDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_statements(&self) -> usize {
        self.table.len()
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    /// Set-bit indices per row; the fitters' sparse working form.
    pub(crate) fn ones(&self) -> Vec<Vec<u32>> {
        self.rows.iter().map(BinaryFeature::ones).collect()
    }
}

/// Binarizes every row of a dataset against a statement table.
pub fn binarize_dataset(data: &Dataset, table: &StatementTable) -> Result<BinarizedDataset> {
    let d = data.n_features();
    if let Some(s) = table.statements.iter().find(|s| s.feature >= d) {
        return Err(Error::Invalid(format!(
            "statement feature {} out of range for {d}-feature data",
            s.feature
        )));
    }
    Ok(BinarizedDataset {
        rows: data.x.iter().map(|row| binarize(row, table)).collect(),
        targets: data.targets.clone(),
        table: table.clone(),
    })
}
