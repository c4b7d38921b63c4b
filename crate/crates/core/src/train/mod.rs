//! Mini-batch training, gradient checking and grid search.
//!
//! Per-sample forward and backward passes run on the rayon pool; results are
//! collected in sample order and summed sequentially, so a run is
//! bit-reproducible for any thread count.
//!
//! Seeds derived from `TrainConfig::seed` (see [`derive_seed`]):
//! tag 0 initialises the model, tag 1 drives the epoch shuffles, tag 2 seeds
//! the SVMs fitted after training.

mod gradcheck;
mod grid;
mod optim;

pub use gradcheck::{grad_check, tiny_instance, GradCheckReport, GRAD_CHECK_FLOOR};
pub use grid::{
    default_grid, grid_search, GridReport, GridRow, GridSearchResult, DEFAULT_BETAS, DEFAULT_ETAS,
    DEFAULT_LAMBDAS,
};
pub use optim::{
    clip_global_norm, optimizer_step, OptState, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

use std::io::Write;
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::decide::LabelClassifier;
use crate::error::{MpnError, Result};
use crate::loss::{
    batch_loss, batch_loss_adjoints, class_weights, l2_penalty_grad, ClassWeights, LossBreakdown,
    LossConfig, LossParams, Target,
};
use crate::lstm::InitRule;
use crate::metrics::{evaluate, PrfReport};
use crate::model::{mpn_backward, mpn_forward, predict, MpnDims, MpnGrads, MpnModel, Prediction};
use crate::tensor::{derive_seed, Rng};

pub const SEED_TAG_INIT: u64 = 0;
pub const SEED_TAG_SHUFFLE: u64 = 1;
pub const SEED_TAG_CLASSIFIER: u64 = 2;
pub const SEED_TAG_SPLIT: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::Base,
            eta: 0.01,
            lambda: 0.01,
            beta: 0.5,
            batch_size: 32,
            max_epochs: 300,
            patience: 25,
            seed: 0,
            clip_norm: None,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MpnError::InvalidConfig(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} must lie in [0, 1]", self.beta));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.loss == LossConfig::Siamese && self.batch_size < 2 {
            return bad("siamese loss needs a batch size of at least 2".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip norm {c} must be positive"));
            }
        }
        Ok(())
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams {
            config: self.loss,
            lambda: self.lambda,
            beta: self.beta,
        }
    }
}

/// Model initialised from `derive_seed(seed, SEED_TAG_INIT)` with the default rule.
pub fn init_model(dims: MpnDims, seed: u64) -> Result<MpnModel> {
    MpnModel::init(
        dims,
        &mut Rng::new(derive_seed(seed, SEED_TAG_INIT)),
        InitRule::default(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, weighted by batch size.
    pub loss: LossBreakdown,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch of the returned snapshot, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub const CSV_HEADER: [&'static str; 8] = [
        "epoch",
        "l_y",
        "l_o",
        "l_s",
        "l_reg",
        "total",
        "val_micro_f1",
        "val_macro_f1",
    ];

    /// Best validation micro+macro F1 over all epochs.
    pub fn best_score(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.val_micro_f1 + r.val_macro_f1)
            .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.max(s))))
    }

    /// Same records ignoring wall time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.best_epoch == other.best_epoch
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss == b.loss
                    && a.val_micro_f1 == b.val_micro_f1
                    && a.val_macro_f1 == b.val_macro_f1
            })
    }

    /// Writes the per-epoch table as comma-separated values (no wall time).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            w.write_record(&[
                r.epoch.to_string(),
                r.loss.l_y.to_string(),
                r.loss.l_o.to_string(),
                r.loss.l_s.to_string(),
                r.loss.l_reg.to_string(),
                r.loss.total.to_string(),
                r.val_micro_f1.to_string(),
                r.val_macro_f1.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Predictions for every sample, in order.
pub fn predict_all(model: &MpnModel, samples: &[Sample]) -> Result<Vec<Prediction>> {
    samples
        .par_iter()
        .map(|s| predict(model, &s.z, &s.c))
        .collect()
}

pub fn targets(samples: &[Sample]) -> Vec<Target<'_>> {
    samples.iter().map(Sample::target).collect()
}

pub fn weights_for(samples: &[Sample]) -> Result<ClassWeights> {
    let rows: Vec<&[u8]> = samples.iter().map(|s| s.y_true.as_slice()).collect();
    class_weights(&rows)
}

/// Loss of a batch and its gradient with respect to every parameter,
/// including the L2 term.
pub fn batch_gradients(
    model: &MpnModel,
    batch: &[&Sample],
    params: LossParams,
    weights: &ClassWeights,
) -> Result<(LossBreakdown, MpnGrads)> {
    let passes: Vec<_> = batch
        .par_iter()
        .map(|s| mpn_forward(model, &s.z, &s.c))
        .collect::<Result<_>>()?;
    let (preds, tapes): (Vec<Prediction>, Vec<_>) = passes.into_iter().unzip();
    let tgts: Vec<Target<'_>> = batch.iter().map(|s| s.target()).collect();
    let (loss, adjs) = batch_loss_adjoints(params, model, &preds, &tgts, weights)?;
    let per_sample: Vec<MpnGrads> = tapes
        .par_iter()
        .zip(adjs.par_iter())
        .map(|(tape, adj)| mpn_backward(model, tape, adj))
        .collect::<Result<_>>()?;
    let mut grads = MpnGrads::zeros(&model.dims);
    for g in &per_sample {
        grads.accumulate(g);
    }
    l2_penalty_grad(model, params.lambda, &mut grads);
    Ok((loss, grads))
}

/// Loss of the whole set treated as one batch.
pub fn dataset_loss(
    model: &MpnModel,
    samples: &[Sample],
    params: LossParams,
    weights: &ClassWeights,
) -> Result<LossBreakdown> {
    let preds = predict_all(model, samples)?;
    batch_loss(params, model, &preds, &targets(samples), weights)
}

/// Segment scores of threshold-at-zero decisions on `samples`.
pub fn threshold_scores(model: &MpnModel, samples: &[Sample]) -> Result<PrfReport> {
    let preds = predict_all(model, samples)?;
    let clf = LabelClassifier::threshold(model.dims.labels, 0.0);
    let decided: Vec<Vec<u8>> = preds.iter().map(|p| clf.classify(&p.g)).collect();
    let truth: Vec<Vec<u8>> = samples.iter().map(|s| s.y_true.clone()).collect();
    evaluate(&decided, &truth)
}

fn check_dims(model: &MpnModel, samples: &[Sample], what: &str) -> Result<()> {
    let d = model.dims;
    for (i, s) in samples.iter().enumerate() {
        if s.z.shape() != (d.history, d.obs_dim)
            || s.c.shape() != (d.total, d.ctx_dim)
            || s.y_true.len() != d.labels
        {
            return Err(MpnError::shape(
                format!("{what} sample {i}"),
                format!(
                    "z {}x{}, c {}x{}, {} labels",
                    d.history, d.obs_dim, d.total, d.ctx_dim, d.labels
                ),
                format!(
                    "z {}x{}, c {}x{}, {} labels",
                    s.z.rows(),
                    s.z.cols(),
                    s.c.rows(),
                    s.c.cols(),
                    s.y_true.len()
                ),
            ));
        }
    }
    Ok(())
}

/// Splits a permutation into batches. A trailing batch too small for the
/// loss is merged into the one before it.
fn batches(order: &[usize], size: usize, min: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < min) {
        let n = out.len();
        let start = order.len() - out[n - 2].len() - out[n - 1].len();
        out.truncate(n - 2);
        out.push(&order[start..]);
    }
    out
}

/// Trains `model` and returns the snapshot with the best validation
/// micro+macro F1 (threshold-at-zero decisions) together with the history.
///
/// Stops after `patience` epochs without a strict improvement, at
/// `max_epochs`, or as soon as the parameters or loss become non-finite.
/// The initial model is only returned when no epoch produced a finite
/// model. An empty validation set falls back to scoring the training set.
pub fn train(
    model: &MpnModel,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<(MpnModel, TrainHistory)> {
    config.validate()?;
    check_dims(model, train_set, "training")?;
    check_dims(model, val_set, "validation")?;
    let mut history = TrainHistory::default();
    if config.max_epochs == 0 {
        return Ok((model.clone(), history));
    }
    if train_set.is_empty() {
        return Err(MpnError::Empty("training set is empty".into()));
    }
    let min_batch = if config.loss == LossConfig::Siamese {
        2
    } else {
        1
    };
    if train_set.len() < min_batch {
        return Err(MpnError::InvalidConfig(
            "siamese loss needs at least two training samples".into(),
        ));
    }
    let val_set = if val_set.is_empty() {
        train_set
    } else {
        val_set
    };
    let weights = weights_for(train_set)?;
    let params = config.loss_params();
    let mut rng = Rng::new(derive_seed(config.seed, SEED_TAG_SHUFFLE));
    let mut current = model.clone();
    let mut flat = current.to_flat();
    let mut opt = OptState::new(config.optimizer, flat.len());
    let mut best: Option<(f64, MpnModel)> = None;
    let mut since_best = 0usize;
    let n = train_set.len() as f64;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let mut acc = LossBreakdown::default();
        let mut finite = true;
        for idx in batches(&order, config.batch_size, min_batch) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradients(&current, &batch, params, &weights)?;
            let share = batch.len() as f64 / n;
            acc.l_y += share * loss.l_y;
            acc.l_o += share * loss.l_o;
            acc.l_s += share * loss.l_s;
            acc.l_reg += share * loss.l_reg;
            let mut g = grads.to_flat();
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut g, c);
            }
            optimizer_step(&mut flat, &g, config.eta, &mut opt)?;
            current.set_flat(&flat)?;
            if !loss.total.is_finite() || !current.is_finite() {
                finite = false;
                break;
            }
        }
        acc.total = acc.l_y + acc.l_o + acc.l_s + acc.l_reg;

        let report = if finite {
            threshold_scores(&current, val_set)?
        } else {
            PrfReport::default()
        };
        let score = report.f1_sum();
        history.records.push(EpochRecord {
            epoch,
            loss: acc,
            val_micro_f1: report.micro_f1,
            val_macro_f1: report.macro_f1,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        debug!(
            "epoch {epoch}: loss {:.6} val micro {:.4} macro {:.4}",
            acc.total, report.micro_f1, report.macro_f1
        );
        if !finite {
            warn!("training diverged at epoch {epoch}; keeping the best finite snapshot");
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, current.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                info!(
                    "early stop at epoch {epoch}, best epoch {:?}",
                    history.best_epoch
                );
                break;
            }
        }
    }
    let out = best.map_or_else(|| model.clone(), |(_, m)| m);
    Ok((out, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};

    fn small_set(n: usize) -> (MpnDims, Vec<Sample>) {
        let cfg = SynthConfig {
            history: 6,
            total: 10,
            ..SynthConfig::default()
        };
        let (meta, samples) = synth_generate(&cfg, n).unwrap();
        (meta.dims(), samples)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                eta: 0.0,
                ..Default::default()
            },
            TrainConfig {
                lambda: -1.0,
                ..Default::default()
            },
            TrainConfig {
                beta: 1.5,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                loss: LossConfig::Siamese,
                batch_size: 1,
                ..Default::default()
            },
            TrainConfig {
                clip_norm: Some(0.0),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn batching_merges_small_tail() {
        let order: Vec<usize> = (0..5).collect();
        let b = batches(&order, 2, 2);
        assert_eq!(b, vec![&[0, 1][..], &[2, 3, 4][..]]);
        let b = batches(&order, 2, 1);
        assert_eq!(b.len(), 3);
        assert_eq!(batches(&order[..1], 4, 1), vec![&[0][..]]);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (dims, s) = small_set(8);
        let m = init_model(dims, 1).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        let (out, h) = train(&m, &s, &s, &cfg).unwrap();
        assert_eq!(out, m);
        assert!(h.records.is_empty());
    }

    #[test]
    fn training_is_reproducible_and_keeps_best() {
        let (dims, s) = small_set(24);
        let m = init_model(dims, 3).unwrap();
        let cfg = TrainConfig {
            max_epochs: 6,
            batch_size: 8,
            ..Default::default()
        };
        let (a, ha) = train(&m, &s[..16], &s[16..], &cfg).unwrap();
        let (b, hb) = train(&m, &s[..16], &s[16..], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(ha.same_trajectory(&hb));
        assert_eq!(ha.records.len(), 6);
        let best = threshold_scores(&a, &s[16..]).unwrap().f1_sum();
        assert_eq!(Some(best), ha.best_score());
    }

    #[test]
    fn batch_gradient_matches_sum_of_parts() {
        let (dims, s) = small_set(4);
        let m = init_model(dims, 5).unwrap();
        let w = weights_for(&s).unwrap();
        let params = LossParams {
            config: LossConfig::Localize,
            lambda: 0.0,
            beta: 0.5,
        };
        let all: Vec<&Sample> = s.iter().collect();
        let (loss, g) = batch_gradients(&m, &all, params, &w).unwrap();
        let full = dataset_loss(&m, &s, params, &w).unwrap();
        assert!((loss.total - full.total).abs() < 1e-14);
        // The batch mean equals the mean of single-sample gradients.
        let mut mean = MpnGrads::zeros(&dims);
        for x in &all {
            mean.accumulate(&batch_gradients(&m, &[*x], params, &w).unwrap().1);
        }
        mean.scale(0.25);
        for (a, b) in g.to_flat().iter().zip(mean.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![EpochRecord {
                epoch: 1,
                loss: LossBreakdown {
                    total: 1.5,
                    l_y: 1.0,
                    l_o: 0.5,
                    l_s: 0.0,
                    l_reg: 0.0,
                },
                val_micro_f1: 0.5,
                val_macro_f1: 0.25,
                wall_secs: 9.0,
            }],
            best_epoch: Some(1),
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epoch,l_y,l_o,l_s,l_reg,total,val_micro_f1,val_macro_f1\n1,1,0.5,0,0,1.5,0.5,0.25\n"
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (dims, s) = small_set(4);
        let other = MpnDims {
            labels: dims.labels + 1,
            ..dims
        };
        let m = init_model(other, 0).unwrap();
        assert!(train(&m, &s, &s, &TrainConfig::default()).is_err());
    }
}
