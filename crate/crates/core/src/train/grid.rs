//! Hyperparameter grid search on a held-out validation set.
//!
//! Every grid point trains from its own initialisation and is scored by the
//! validation micro+macro F1 of per-label SVMs fitted on its training
//! embeddings. The best score wins; ties go to the smaller learning rate,
//! then the larger λ, then the earlier grid point.

use std::cmp::Ordering;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init_model, predict_all, train, TrainConfig, SEED_TAG_CLASSIFIER};
use crate::data::Sample;
use crate::decide::ClassifierKind;
use crate::error::{MpnError, Result};
use crate::eval::{fit_segment, segment_report};
use crate::loss::LossConfig;
use crate::model::{MpnDims, MpnModel};
use crate::tensor::derive_seed;

pub const DEFAULT_ETAS: [f64; 3] = [0.001, 0.01, 0.1];
pub const DEFAULT_LAMBDAS: [f64; 3] = [0.01, 0.1, 1.0];
pub const DEFAULT_BETAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Grid over learning rate and λ (and β for the siamese loss), built on
/// `base`. Point `k` gets seed `base.seed + k`.
pub fn default_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let betas: &[f64] = if base.loss == LossConfig::Siamese {
        &DEFAULT_BETAS
    } else {
        std::slice::from_ref(&base.beta)
    };
    let mut out = Vec::new();
    for &eta in &DEFAULT_ETAS {
        for &beta in betas {
            for &lambda in &DEFAULT_LAMBDAS {
                out.push(TrainConfig {
                    eta,
                    lambda,
                    beta,
                    seed: base.seed.wrapping_add(out.len() as u64),
                    ..base.clone()
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
}

impl GridRow {
    pub fn score(&self) -> f64 {
        self.val_micro_f1 + self.val_macro_f1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub loss: LossConfig,
    /// Rows in grid order.
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected point.
    pub best: usize,
}

impl GridReport {
    /// Rows ranked best first.
    pub fn ranked(&self) -> Vec<&GridRow> {
        let mut rows: Vec<&GridRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| compare_rows(a, b));
        rows
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "loss: {}\nbest: {}\n{:>4} {:>4} {:>8} {:>8} {:>6} {:>9} {:>9} {:>7}\n",
            self.loss.name(),
            self.best,
            "rank",
            "idx",
            "eta",
            "lambda",
            "beta",
            "micro_f1",
            "macro_f1",
            "epochs"
        );
        for (rank, r) in self.ranked().into_iter().enumerate() {
            s.push_str(&format!(
                "{:>4} {:>4} {:>8} {:>8} {:>6} {:>9.6} {:>9.6} {:>7}\n",
                rank + 1,
                r.index,
                r.eta,
                r.lambda,
                r.beta,
                r.val_micro_f1,
                r.val_macro_f1,
                r.epochs
            ));
        }
        s
    }
}

/// Best first: higher score, then smaller η, then larger λ, then lower index.
fn compare_rows(a: &GridRow, b: &GridRow) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then(a.eta.total_cmp(&b.eta))
        .then(b.lambda.total_cmp(&a.lambda))
        .then(a.index.cmp(&b.index))
}

pub struct GridSearchResult {
    pub config: TrainConfig,
    pub model: MpnModel,
    pub report: GridReport,
}

pub fn grid_search(
    grid: &[TrainConfig],
    dims: MpnDims,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<GridSearchResult> {
    let first = grid
        .first()
        .ok_or_else(|| MpnError::Empty("grid search needs at least one grid point".into()))?;
    if grid.iter().any(|c| c.loss != first.loss) {
        return Err(MpnError::InvalidConfig(
            "all grid points must use the same loss".into(),
        ));
    }
    for c in grid {
        c.validate()?;
    }
    let scored_on = if val_set.is_empty() {
        train_set
    } else {
        val_set
    };
    let runs: Vec<(GridRow, MpnModel)> = grid
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let init = init_model(dims, cfg.seed)?;
            let (model, history) = train(&init, train_set, val_set, cfg)?;
            let train_preds = predict_all(&model, train_set)?;
            let svm = fit_segment(
                ClassifierKind::Svm,
                &train_preds,
                train_set,
                derive_seed(cfg.seed, SEED_TAG_CLASSIFIER),
            )?;
            let report = segment_report(&svm, &predict_all(&model, scored_on)?, scored_on)?;
            info!(
                "grid point {index}: eta {} lambda {} beta {} -> micro {:.4} macro {:.4}",
                cfg.eta, cfg.lambda, cfg.beta, report.micro_f1, report.macro_f1
            );
            let row = GridRow {
                index,
                eta: cfg.eta,
                lambda: cfg.lambda,
                beta: cfg.beta,
                seed: cfg.seed,
                val_micro_f1: report.micro_f1,
                val_macro_f1: report.macro_f1,
                epochs: history.records.len(),
                best_epoch: history.best_epoch,
            };
            Ok((row, model))
        })
        .collect::<Result<_>>()?;

    let best = runs
        .iter()
        .map(|(r, _)| r)
        .min_by(|a, b| compare_rows(a, b))
        .map(|r| r.index)
        .unwrap_or(0);
    let (rows, mut models): (Vec<GridRow>, Vec<MpnModel>) = runs.into_iter().unzip();
    Ok(GridSearchResult {
        config: grid[best].clone(),
        model: models.swap_remove(best),
        report: GridReport {
            loss: first.loss,
            rows,
            best,
        },
    })
}
