//! Feature-vector datasets: synthetic imbalanced Gaussian clusters, CSV I/O,
//! and stratified k-fold splitting.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// A labeled feature-vector dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let n = class_names.len();
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one class".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {n} classes"
            )));
        }
        let counts = count_labels(&labels, n);
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!(
                "class {j} ({}) has no examples",
                class_names[j]
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        count_labels(&self.labels, self.n_classes())
    }

    /// New dataset containing the given example indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.input_dim();
        let mut features = Matrix::zeros(indices.len(), d);
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &idx) in indices.iter().enumerate() {
            if idx >= self.n_examples() {
                return Err(Error::InvalidInput(format!(
                    "index {idx} out of range for {} examples",
                    self.n_examples()
                )));
            }
            features.row_mut(r).copy_from_slice(self.features.row(idx));
            labels.push(self.labels[idx]);
        }
        Dataset::new(features, labels, self.class_names.clone())
    }
}

fn count_labels(labels: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}

/// Parameters for the synthetic imbalanced-cluster generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub in_dim: usize,
    pub class_counts: Vec<usize>,
    /// Mutual distance between all pairs of class means.
    pub class_separation: f64,
    /// Within-class standard deviation (per coordinate).
    pub intra_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The reference benchmark: three overlapping classes whose counts mirror
    /// the 239:1000:1000 skew at one-tenth scale, minority class first.
    fn default() -> Self {
        Self {
            n_classes: 3,
            in_dim: 8,
            class_counts: vec![24, 100, 100],
            class_separation: 2.0,
            intra_spread: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::InvalidConfig("need at least one class".into()));
        }
        if self.class_counts.len() != self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "{} counts for {} classes",
                self.class_counts.len(),
                self.n_classes
            )));
        }
        if self.class_counts.contains(&0) {
            return Err(Error::InvalidConfig("class counts must be positive".into()));
        }
        if self.in_dim < self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "in_dim {} too small to place {} equidistant class means",
                self.in_dim, self.n_classes
            )));
        }
        if !(self.class_separation > 0.0) {
            return Err(Error::InvalidConfig(
                "class separation must be positive".into(),
            ));
        }
        if !(self.intra_spread > 0.0) {
            return Err(Error::InvalidConfig(
                "intra-class spread must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Class mean vectors on a regular simplex: scaled canonical basis
    /// vectors, so every pair sits at distance `class_separation`.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let scale = self.class_separation / std::f64::consts::SQRT_2;
        (0..self.n_classes)
            .map(|j| {
                let mut mu = vec![0.0; self.in_dim];
                mu[j] = scale;
                mu
            })
            .collect()
    }
}

/// SplitMix64 step, used to derive independent per-class and per-fold seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws each class from an isotropic Gaussian at its simplex mean.
/// Each class consumes its own seeded stream, so a class's point cloud
/// depends only on the master seed, its index, and its count.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let means = cfg.class_means();
    let total: usize = cfg.class_counts.iter().sum();
    let mut features = Matrix::zeros(total, cfg.in_dim);
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (j, (&count, mu)) in cfg.class_counts.iter().zip(&means).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, j as u64));
        for _ in 0..count {
            let out = features.row_mut(row);
            for (k, v) in out.iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v = mu[k] + cfg.intra_spread * noise;
            }
            labels.push(j);
            row += 1;
        }
    }
    let class_names = (0..cfg.n_classes).map(|j| format!("class_{j}")).collect();
    Dataset::new(features, labels, class_names)
}

/// One cross-validation split: indices into the parent dataset.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split. Each class's indices are shuffled once and dealt
/// into k contiguous chunks whose sizes differ by at most one, so per-fold
/// class proportions stay within one example of the global proportions.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need k >= 2 folds, got {k}")));
    }
    let n = dataset.n_classes();
    let counts = dataset.class_counts();
    if let Some(j) = counts.iter().position(|&c| c < k) {
        return Err(Error::InvalidInput(format!(
            "class {j} has {} examples, fewer than {k} folds",
            counts[j]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, &y) in dataset.labels().iter().enumerate() {
        per_class[y].push(idx);
    }
    for indices in &mut per_class {
        shuffle(indices, &mut rng);
    }

    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for indices in &per_class {
        let base = indices.len() / k;
        let extra = indices.len() % k;
        let mut start = 0;
        for (f, test) in test_sets.iter_mut().enumerate() {
            let size = base + usize::from(f < extra);
            test.extend_from_slice(&indices[start..start + size]);
            start += size;
        }
    }

    let total = dataset.n_examples();
    Ok(test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; total];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..total).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

/// Fisher-Yates with the crate's seeded generator.
fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

/// Writes `label,f0,f1,...` rows; floats use the shortest representation that
/// round-trips exactly.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "label")?;
    for k in 0..dataset.input_dim() {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for (i, &y) in dataset.labels().iter().enumerate() {
        write!(out, "{y}")?;
        for &v in dataset.features().row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`save_csv`]. The label column holds the class
/// index; the class count is inferred from the largest label, and every class
/// below it must appear at least once.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_parse_error(&e))?;
    let header_width = {
        let headers = reader.headers().map_err(|e| csv_parse_error(&e))?;
        if headers.is_empty() || headers.get(0) != Some("label") {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header starting with 'label'".into(),
            });
        }
        headers.len()
    };
    if header_width < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "expected at least one feature column".into(),
        });
    }
    let width = header_width - 1;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_parse_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header_width {
            return Err(Error::Parse {
                line,
                msg: format!("row has {} fields, expected {header_width}", record.len()),
            });
        }
        let label_field = record.get(0).unwrap_or("");
        let label: usize = label_field.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("unknown label {label_field:?} (expected a class index)"),
        })?;
        let mut row = Vec::with_capacity(width);
        for field in record.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected a number, got {field:?}"),
            })?;
            row.push(v);
        }
        labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let n = labels.iter().max().copied().unwrap_or(0) + 1;
    let features = Matrix::from_rows(&rows)?;
    let class_names = (0..n).map(|j| format!("class_{j}")).collect();
    Dataset::new(features, labels, class_names)
}

fn csv_parse_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}
