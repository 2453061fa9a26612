//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use dcsl::data::{derive_seed, kfold, save_csv, Dataset, Fold};
use dcsl::eval::{confusion, metrics, paired_ttest, ConfusionMatrix, MetricsReport};
use dcsl::trainer::{fit, LossMode, TrainConfig, TrainState};
use dcsl::{Error, Result};

use crate::parallel::{parallel_map, thread_cap};
use crate::settings::{DataSource, Settings};

fn ensure_out_dir(settings: &Settings) -> Result<()> {
    fs::create_dir_all(&settings.out)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, body + "\n")?;
    Ok(())
}

fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    let mut out = String::new();
    for row in cm.to_rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Generates a synthetic dataset CSV and prints the per-class counts.
pub fn gen_data(settings: &Settings) -> Result<()> {
    let cfg = match &settings.source {
        DataSource::Synth(cfg) => cfg,
        DataSource::Csv(_) => {
            return Err(Error::InvalidConfig(
                "gen-data generates synthetic data; --data does not apply".into(),
            ))
        }
    };
    let dataset = dcsl::data::generate(cfg)?;
    ensure_out_dir(settings)?;
    let path = settings.out.join("dataset.csv");
    save_csv(&dataset, &path)?;
    println!(
        "wrote {} ({} examples)",
        path.display(),
        dataset.n_examples()
    );
    for (name, count) in dataset.class_names().iter().zip(dataset.class_counts()) {
        println!("  {name}: {count}");
    }
    Ok(())
}

/// Trains on the full dataset; writes the model, history, and train metrics.
pub fn train(settings: &Settings) -> Result<()> {
    let dataset = settings.load_dataset()?;
    ensure_out_dir(settings)?;
    let state = fit(&dataset, &settings.train)?;

    let mut history = String::from("epoch,mean_loss,train_accuracy\n");
    for h in &state.history {
        history.push_str(&format!(
            "{},{},{}\n",
            h.epoch, h.mean_loss, h.train_accuracy
        ));
    }
    fs::write(settings.out.join("history.csv"), history)?;
    write_json(&settings.out.join("model.json"), &state)?;

    let report = evaluate(&state, &dataset, settings.train.costs_at_test)?;
    write_json(&settings.out.join("train_metrics.json"), &report)?;
    let last = state.history.last().expect("epochs >= 1");
    println!(
        "trained {} for {} epochs: final loss {:.6}, train accuracy {:.4}",
        settings.train.loss_mode.as_str(),
        state.history.len(),
        last.mean_loss,
        last.train_accuracy
    );
    Ok(())
}

fn evaluate(state: &TrainState, dataset: &Dataset, costs_at_test: bool) -> Result<MetricsReport> {
    let (predictions, _) = state.predict(dataset.features(), costs_at_test)?;
    let cm = confusion(&predictions, dataset.labels(), dataset.n_classes())?;
    metrics(&cm)
}

struct FoldOutcome {
    report: MetricsReport,
    confusion: ConfusionMatrix,
}

fn run_fold(
    dataset: &Dataset,
    fold: &Fold,
    base: &TrainConfig,
    master_seed: u64,
    fold_index: usize,
) -> Result<FoldOutcome> {
    let train_ds = dataset.subset(&fold.train)?;
    let test_ds = dataset.subset(&fold.test)?;
    let config = TrainConfig {
        seed: derive_seed(master_seed, fold_index as u64),
        ..base.clone()
    };
    let state = fit(&train_ds, &config)?;
    let (predictions, _) = state.predict(test_ds.features(), config.costs_at_test)?;
    let cm = confusion(&predictions, test_ds.labels(), dataset.n_classes())?;
    Ok(FoldOutcome {
        report: metrics(&cm)?,
        confusion: cm,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt())
}

fn minority_class(dataset: &Dataset) -> usize {
    let counts = dataset.class_counts();
    let mut best = 0;
    for (j, &c) in counts.iter().enumerate().skip(1) {
        if c < counts[best] {
            best = j;
        }
    }
    best
}

/// k-fold cross-validation: per-fold metrics JSON and confusion CSVs plus an
/// aggregate mean/sd summary. Folds run in parallel up to `DCSL_THREADS`.
pub fn crossval(settings: &Settings) -> Result<()> {
    let dataset = settings.load_dataset()?;
    ensure_out_dir(settings)?;
    let folds = kfold(&dataset, settings.folds, settings.seed)?;

    let outcomes = parallel_map(folds.len(), thread_cap(), |i| {
        run_fold(&dataset, &folds[i], &settings.train, settings.seed, i)
    });

    let minority = minority_class(&dataset);
    let mut reports = Vec::new();
    let mut first_error = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(outcome) => {
                write_json(
                    &settings.out.join(format!("fold_{i}.json")),
                    &outcome.report,
                )?;
                write_confusion_csv(
                    &settings.out.join(format!("fold_{i}_confusion.csv")),
                    &outcome.confusion,
                )?;
                reports.push(outcome.report);
            }
            Err(e) => {
                eprintln!("fold {i} failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(match e {
            Error::TrainingDiverged(msg) => Error::TrainingDiverged(msg),
            other => other,
        });
    }

    let aggregate = aggregate_json(&reports, minority, settings);
    write_json(&settings.out.join("aggregate.json"), &aggregate)?;
    println!(
        "{} folds done: accuracy {:.4} +- {:.4}",
        reports.len(),
        aggregate["accuracy_mean"].as_f64().unwrap_or(f64::NAN),
        aggregate["accuracy_sd"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn aggregate_json(
    reports: &[MetricsReport],
    minority: usize,
    settings: &Settings,
) -> serde_json::Value {
    let pull = |f: fn(&MetricsReport) -> f64| -> (f64, f64) {
        let values: Vec<f64> = reports.iter().map(f).collect();
        mean_sd(&values)
    };
    let (acc_m, acc_s) = pull(|r| r.accuracy);
    let (prec_m, prec_s) = pull(|r| r.precision_macro);
    let (sens_m, sens_s) = pull(|r| r.sensitivity_macro);
    let (f1_m, f1_s) = pull(|r| r.f1_macro);
    let minority_vals: Vec<f64> = reports
        .iter()
        .map(|r| r.sensitivity_per_class[minority])
        .collect();
    let (min_m, min_s) = mean_sd(&minority_vals);
    serde_json::json!({
        "folds": reports.len(),
        "seed": settings.seed,
        "accuracy_mean": acc_m,
        "accuracy_sd": acc_s,
        "precision_macro_mean": prec_m,
        "precision_macro_sd": prec_s,
        "sensitivity_macro_mean": sens_m,
        "sensitivity_macro_sd": sens_s,
        "f1_macro_mean": f1_m,
        "f1_macro_sd": f1_s,
        "minority_class": minority,
        "minority_sensitivity_mean": min_m,
        "minority_sensitivity_sd": min_s,
    })
}

const ABLATION_MODES: [LossMode; 4] = [
    LossMode::Softmax,
    LossMode::SoftmaxCl,
    LossMode::SoftmaxCcl,
    LossMode::Dcsl,
];

/// Runs all four loss modes over identical folds and seeds; writes the
/// comparison table, pooled per-mode confusion matrices, and a paired t-test
/// of the cost-sensitive mode against the softmax baseline.
pub fn ablate(settings: &Settings) -> Result<()> {
    let dataset = settings.load_dataset()?;
    ensure_out_dir(settings)?;
    let folds = kfold(&dataset, settings.folds, settings.seed)?;
    let minority = minority_class(&dataset);

    let n_tasks = ABLATION_MODES.len() * folds.len();
    let outcomes = parallel_map(n_tasks, thread_cap(), |task| {
        let mode = ABLATION_MODES[task / folds.len()];
        let fold_index = task % folds.len();
        let base = TrainConfig {
            loss_mode: mode,
            ..settings.train.clone()
        };
        run_fold(
            &dataset,
            &folds[fold_index],
            &base,
            settings.seed,
            fold_index,
        )
    });

    let mut table = String::from("mode,accuracy,precision,sensitivity,f1,minority_sensitivity\n");
    let mut per_mode_minority: Vec<Vec<f64>> = Vec::new();
    for (m, mode) in ABLATION_MODES.iter().enumerate() {
        let mut pooled = ConfusionMatrix::new(dataset.n_classes());
        let mut fold_reports = Vec::new();
        for f in 0..folds.len() {
            match &outcomes[m * folds.len() + f] {
                Ok(outcome) => {
                    pooled.merge(&outcome.confusion)?;
                    fold_reports.push(outcome.report.clone());
                }
                Err(e) => {
                    return Err(Error::TrainingDiverged(format!(
                        "{} fold {f}: {e}",
                        mode.as_str()
                    )))
                }
            }
        }
        let grab = |f: fn(&MetricsReport) -> f64| -> f64 {
            mean_sd(&fold_reports.iter().map(f).collect::<Vec<_>>()).0
        };
        let minority_vals: Vec<f64> = fold_reports
            .iter()
            .map(|r| r.sensitivity_per_class[minority])
            .collect();
        table.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            mode.as_str(),
            grab(|r| r.accuracy),
            grab(|r| r.precision_macro),
            grab(|r| r.sensitivity_macro),
            grab(|r| r.f1_macro),
            mean_sd(&minority_vals).0,
        ));
        per_mode_minority.push(minority_vals);
        write_confusion_csv(
            &settings
                .out
                .join(format!("confusion_{}.csv", mode.as_str())),
            &pooled,
        )?;
    }
    fs::write(settings.out.join("ablation.csv"), &table)?;

    // Fold-paired comparison of the full method against the baseline.
    let dcsl_vals = &per_mode_minority[3];
    let softmax_vals = &per_mode_minority[0];
    match paired_ttest(dcsl_vals, softmax_vals) {
        Ok(test) => {
            write_json(
                &settings.out.join("ttest_dcsl_vs_softmax.json"),
                &serde_json::json!({
                    "metric": "minority_sensitivity",
                    "t": test.t,
                    "p": test.p,
                    "df": test.df,
                }),
            )?;
        }
        Err(Error::DegenerateSample(msg)) => {
            eprintln!("t-test skipped: {msg}");
        }
        Err(e) => return Err(e),
    }

    print!("{table}");
    Ok(())
}

/// Trains on the full dataset and exports the deep features, one row per
/// example: id, label, f0..f{d-1}.
pub fn export_embeddings(settings: &Settings) -> Result<()> {
    let dataset = settings.load_dataset()?;
    ensure_out_dir(settings)?;
    let state = fit(&dataset, &settings.train)?;
    let features = state.features(dataset.features())?;

    let path = settings.out.join("embeddings.csv");
    let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
    write!(out, "id,label")?;
    for k in 0..features.cols() {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for (i, &label) in dataset.labels().iter().enumerate() {
        write!(out, "{i},{label}")?;
        for &v in features.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    println!(
        "wrote {} ({} rows, {} feature columns)",
        path.display(),
        dataset.n_examples(),
        features.cols()
    );
    Ok(())
}
