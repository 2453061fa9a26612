//! Flag and config-file handling.
//!
//! Every run is described by a flat `key=value` config file, overridable by
//! command-line flags (flags win). Defaults sit below both.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use dcsl::centers::CenterWeighting;
use dcsl::costs::{ScoreCostMatrix, ScoreTransform};
use dcsl::data::SynthConfig;
use dcsl::trainer::{ClassWeightMode, LossMode, TrainConfig};
use dcsl::{Error, Result};

/// Flags shared by every subcommand. All optional so that config-file values
/// can fill the gaps.
#[derive(Debug, Clone, Args)]
pub struct CommonFlags {
    /// Flat key=value config file; flags given on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master random seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Number of cross-validation folds.
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,

    /// Training loss: softmax | softmax_cl | softmax_ccl | dcsl.
    #[arg(long, value_name = "M")]
    pub loss_mode: Option<String>,

    /// Score cost matrix: a CSV path or "clinical-default".
    #[arg(long, value_name = "PATH|clinical-default")]
    pub cost_matrix: Option<String>,

    /// Class weight mode: frequency | inverse | unit.
    #[arg(long, value_name = "MODE")]
    pub class_weights: Option<String>,

    /// Balance between cross-entropy and the center penalty.
    #[arg(long, value_name = "X")]
    pub lambda_c: Option<f64>,

    /// Center update rate.
    #[arg(long, value_name = "X")]
    pub alpha: Option<f64>,

    /// Learning rate.
    #[arg(long, value_name = "X")]
    pub lr: Option<f64>,

    /// Training epochs.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,

    /// Mini-batch size.
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,

    /// Train/evaluate on this dataset CSV instead of synthetic data.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Per-class example counts for synthetic data, e.g. 24,100,100.
    #[arg(long, value_name = "LIST")]
    pub counts: Option<String>,

    /// Synthetic feature dimension.
    #[arg(long, value_name = "N")]
    pub dim: Option<usize>,

    /// Distance between synthetic class means.
    #[arg(long, value_name = "X")]
    pub separation: Option<f64>,

    /// Within-class standard deviation of synthetic data.
    #[arg(long, value_name = "X")]
    pub spread: Option<f64>,

    /// Hidden layer widths before the feature layer, e.g. 64 or 64,32.
    #[arg(long, value_name = "LIST")]
    pub hidden: Option<String>,

    /// Width of the deep-feature layer.
    #[arg(long, value_name = "N")]
    pub feature_dim: Option<usize>,

    /// Score transform: matrix-product | label-row.
    #[arg(long, value_name = "MODE")]
    pub score_transform: Option<String>,

    /// Class weight placement in center updates: none | delta | update | both.
    #[arg(long, value_name = "MODE")]
    pub center_weighting: Option<String>,

    /// Apply score costs at prediction time: true | false.
    #[arg(long, value_name = "BOOL")]
    pub costs_at_test: Option<String>,
}

/// Where the examples come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Synth(SynthConfig),
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub out: PathBuf,
    pub folds: usize,
    pub train: TrainConfig,
    pub source: DataSource,
}

fn parse_key<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse {key}={raw:?}")))
}

fn parse_usize_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|part| parse_key::<usize>(key, part))
        .collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::InvalidConfig(format!(
            "cannot parse {key}={other:?} (expected true or false)"
        ))),
    }
}

fn parse_score_transform(raw: &str) -> Result<ScoreTransform> {
    match raw {
        "matrix-product" | "matrix_product" => Ok(ScoreTransform::MatrixProduct),
        "label-row" | "label_row" => Ok(ScoreTransform::LabelRow),
        other => Err(Error::InvalidConfig(format!(
            "unknown score transform {other:?} (expected matrix-product or label-row)"
        ))),
    }
}

fn parse_center_weighting(raw: &str) -> Result<CenterWeighting> {
    match raw {
        "none" => Ok(CenterWeighting::None),
        "delta" => Ok(CenterWeighting::Delta),
        "update" => Ok(CenterWeighting::Update),
        "both" => Ok(CenterWeighting::Both),
        other => Err(Error::InvalidConfig(format!(
            "unknown center weighting {other:?} (expected none, delta, update, both)"
        ))),
    }
}

/// Reads a flat key=value file; '#' starts a comment, blank lines are skipped.
pub fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected key=value, got {line:?}"),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "folds",
    "loss-mode",
    "cost-matrix",
    "class-weights",
    "lambda-c",
    "alpha",
    "lr",
    "epochs",
    "batch",
    "data",
    "counts",
    "dim",
    "separation",
    "spread",
    "hidden",
    "feature-dim",
    "score-transform",
    "center-weighting",
    "costs-at-test",
];

impl CommonFlags {
    /// Merge defaults <- config file <- flags into concrete settings.
    pub fn resolve(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => HashMap::new(),
        };
        if let Some(unknown) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!(
                "unknown config key {unknown:?}"
            )));
        }
        let get = |key: &str| file.get(key).map(String::as_str);

        let seed = match (self.seed, get("seed")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("seed", raw)?,
            (None, None) => 0,
        };
        let out = match (&self.out, get("out")) {
            (Some(v), _) => v.clone(),
            (None, Some(raw)) => PathBuf::from(raw),
            (None, None) => PathBuf::from("out"),
        };
        let folds = match (self.folds, get("folds")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("folds", raw)?,
            (None, None) => 5,
        };

        let mut train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        if let Some(raw) = get("loss-mode") {
            train.loss_mode = LossMode::parse(raw)?;
        }
        if let Some(raw) = &self.loss_mode {
            train.loss_mode = LossMode::parse(raw)?;
        }
        if let Some(raw) = get("class-weights") {
            train.class_weight_mode = ClassWeightMode::parse(raw)?;
        }
        if let Some(raw) = &self.class_weights {
            train.class_weight_mode = ClassWeightMode::parse(raw)?;
        }
        train.lambda_c = match (self.lambda_c, get("lambda-c")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("lambda-c", raw)?,
            (None, None) => train.lambda_c,
        };
        train.alpha = match (self.alpha, get("alpha")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("alpha", raw)?,
            (None, None) => train.alpha,
        };
        train.learning_rate = match (self.lr, get("lr")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("lr", raw)?,
            (None, None) => train.learning_rate,
        };
        train.epochs = match (self.epochs, get("epochs")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("epochs", raw)?,
            (None, None) => train.epochs,
        };
        train.batch_size = match (self.batch, get("batch")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("batch", raw)?,
            (None, None) => train.batch_size,
        };
        if let Some(raw) = get("hidden") {
            train.hidden_dims = parse_usize_list("hidden", raw)?;
        }
        if let Some(raw) = &self.hidden {
            train.hidden_dims = parse_usize_list("hidden", raw)?;
        }
        train.feature_dim = match (self.feature_dim, get("feature-dim")) {
            (Some(v), _) => v,
            (None, Some(raw)) => parse_key("feature-dim", raw)?,
            (None, None) => train.feature_dim,
        };
        if let Some(raw) = get("score-transform") {
            train.score_transform = parse_score_transform(raw)?;
        }
        if let Some(raw) = &self.score_transform {
            train.score_transform = parse_score_transform(raw)?;
        }
        if let Some(raw) = get("center-weighting") {
            train.center_weighting = parse_center_weighting(raw)?;
        }
        if let Some(raw) = &self.center_weighting {
            train.center_weighting = parse_center_weighting(raw)?;
        }
        if let Some(raw) = get("costs-at-test") {
            train.costs_at_test = parse_bool("costs-at-test", raw)?;
        }
        if let Some(raw) = &self.costs_at_test {
            train.costs_at_test = parse_bool("costs-at-test", raw)?;
        }

        let cost_matrix = self
            .cost_matrix
            .clone()
            .or_else(|| get("cost-matrix").map(str::to_string));
        train.score_costs = match cost_matrix.as_deref() {
            None => None,
            Some("clinical-default") => Some(ScoreCostMatrix::clinical_default()),
            Some(path) => Some(ScoreCostMatrix::from_csv_path(Path::new(path))?),
        };

        let data = self.data.clone().or_else(|| get("data").map(PathBuf::from));
        let synth_flag_given = self.counts.is_some()
            || self.dim.is_some()
            || self.separation.is_some()
            || self.spread.is_some();
        let source = match data {
            Some(path) => {
                if synth_flag_given {
                    return Err(Error::InvalidConfig(
                        "exactly one data source: --data conflicts with synthetic-data flags"
                            .into(),
                    ));
                }
                DataSource::Csv(path)
            }
            None => {
                let mut synth = SynthConfig {
                    seed,
                    ..SynthConfig::default()
                };
                if let Some(raw) = get("counts") {
                    synth.class_counts = parse_usize_list("counts", raw)?;
                }
                if let Some(raw) = &self.counts {
                    synth.class_counts = parse_usize_list("counts", raw)?;
                }
                synth.n_classes = synth.class_counts.len();
                synth.in_dim = match (self.dim, get("dim")) {
                    (Some(v), _) => v,
                    (None, Some(raw)) => parse_key("dim", raw)?,
                    (None, None) => synth.in_dim,
                };
                synth.class_separation = match (self.separation, get("separation")) {
                    (Some(v), _) => v,
                    (None, Some(raw)) => parse_key("separation", raw)?,
                    (None, None) => synth.class_separation,
                };
                synth.intra_spread = match (self.spread, get("spread")) {
                    (Some(v), _) => v,
                    (None, Some(raw)) => parse_key("spread", raw)?,
                    (None, None) => synth.intra_spread,
                };
                DataSource::Synth(synth)
            }
        };

        Ok(Settings {
            seed,
            out,
            folds,
            train,
            source,
        })
    }
}

impl Settings {
    pub fn load_dataset(&self) -> Result<dcsl::data::Dataset> {
        match &self.source {
            DataSource::Csv(path) => dcsl::data::load_csv(path),
            DataSource::Synth(cfg) => dcsl::data::generate(cfg),
        }
    }
}
