use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::metrics::{compute_metrics_with, mean_metrics, F1Average, Metrics};
use super::model::VgaModel;
use super::train::{evaluate, train, TrainOptions, TrainReport};
use crate::datamodel::{make_folds, validation_count, Dataset};
use crate::error::{Result, VgaError};
use crate::tensorcore::derive_seed;

#[derive(Debug, Clone, Default)]
pub struct CvOptions {
    pub f1_average: F1Average,
    pub train: TrainOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out metrics of the fold's best-validation model.
    pub metrics: Metrics,
    /// Training-split accuracy of the same model.
    pub train_accuracy: f64,
    pub epochs: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub alpha: f64,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
}

impl CvReport {
    /// Line-delimited `key=value` records, one per fold plus a `fold=mean` line.
    pub fn summary_lines(&self) -> Vec<String> {
        let line = |fold: &str, m: &Metrics| {
            format!(
                "fold={fold} accuracy={} precision={} recall={} f1={} alpha={} seed={}",
                m.accuracy, m.precision, m.recall, m.f1, self.alpha, self.seed
            )
        };
        let mut out: Vec<String> = self
            .folds
            .iter()
            .map(|f| line(&f.fold.to_string(), &f.metrics))
            .collect();
        out.push(line("mean", &self.mean));
        out
    }
}

/// Seed of the model trained for fold `f` under master seed `seed`.
pub fn fold_seed(seed: u64, f: usize) -> u64 {
    derive_seed(seed, &format!("fold{f}"))
}

/// k-fold cross-validation with a nested train/validation split inside every fold.
pub fn cross_validate(
    config: &ModelConfig,
    dataset: &Dataset,
    opts: &CvOptions,
) -> Result<CvReport> {
    config.validate()?;
    if dataset.len() < config.folds {
        return Err(VgaError::config(format!(
            "{} claims cannot be split into {} folds",
            dataset.len(),
            config.folds
        )));
    }
    let plan = make_folds(dataset.len(), config.folds, config.seed)?;
    let prepared = VgaModel::new(config.clone())?.prepare_all(dataset)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>();

    let mut folds = Vec::with_capacity(plan.k());
    for (f, split) in plan.splits.iter().enumerate() {
        let fold_cfg = ModelConfig {
            seed: fold_seed(config.seed, f),
            ..config.clone()
        };
        let mut model = VgaModel::new(fold_cfg)?;
        let (tr, va, te) = (
            pick(&split.train),
            pick(&split.validation),
            pick(&split.test),
        );
        let report = train(&mut model, &tr, &va, &opts.train)?;
        let test_eval = evaluate(&model, &te)?;
        let labels: Vec<u8> = te.iter().map(|c| c.label).collect();
        let metrics = compute_metrics_with(&test_eval.predictions, &labels, opts.f1_average)?;
        let train_accuracy = evaluate(&model, &tr)?.metrics.accuracy;
        info!("fold {f}: {metrics} ({} epochs)", report.epochs_run());
        folds.push(FoldResult {
            fold: f,
            metrics,
            train_accuracy,
            epochs: report.epochs_run(),
            best_epoch: report.best_epoch,
        });
    }
    let all: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    Ok(CvReport {
        alpha: config.alpha,
        seed: config.seed,
        mean: mean_metrics(&all),
        folds,
    })
}

/// Trains one model on the whole dataset with the same 8:2 train/validation nesting as a fold.
pub fn fit(
    config: &ModelConfig,
    dataset: &Dataset,
    opts: &TrainOptions,
) -> Result<(VgaModel, TrainReport)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(VgaError::config("fitting needs at least 2 claims"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        "fit",
    )));
    let n_val = validation_count(order.len());
    let mut model = VgaModel::new(config.clone())?;
    let prepared = model.prepare_all(dataset)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>();
    let (va, tr) = (pick(&order[..n_val]), pick(&order[n_val..]));
    let report = train(&mut model, &tr, &va, opts)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alpha: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best_alpha: f64,
    pub rows: Vec<GridRow>,
}

/// The row with the highest accuracy; ties go to the lower α.
pub fn select_best(rows: &[GridRow]) -> Option<f64> {
    let mut best: Option<&GridRow> = None;
    for r in rows {
        best = match best {
            Some(b) if b.metrics.accuracy > r.metrics.accuracy => Some(b),
            Some(b) if b.metrics.accuracy == r.metrics.accuracy && b.alpha <= r.alpha => Some(b),
            _ => Some(r),
        };
    }
    best.map(|r| r.alpha)
}

/// Cross-validates once per α and keeps the best mean accuracy.
pub fn grid_search_alpha(
    config: &ModelConfig,
    dataset: &Dataset,
    grid: &[f64],
    opts: &CvOptions,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(VgaError::config("α grid is empty"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let cfg = ModelConfig {
            alpha,
            ..config.clone()
        };
        let rep = cross_validate(&cfg, dataset, opts)?;
        rows.push(GridRow {
            alpha,
            metrics: rep.mean,
        });
    }
    let best_alpha = select_best(&rows).expect("grid is nonempty");
    Ok(GridSearch { best_alpha, rows })
}
