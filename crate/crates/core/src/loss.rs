//! Training objectives.
//!
//! * segment loss: class-weighted binary cross-entropy on `y`, where only
//!   the positive term carries the weight `w_ℓ = -ln p_ℓ`
//! * stepwise loss: mean squared error of `o` against the binary stepwise
//!   labels
//! * pair loss: squared error of `s = exp(-|g_i - g_j|)` against label
//!   agreement
//! * batch compositions `base`, `localize` and `siamese`, each plus
//!   `(λ/2)·Σ‖W‖²_F` over the weight matrices

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::model::{MpnGrads, MpnModel, OutputAdjoint, Prediction};
use crate::tensor::Matrix;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossConfig {
    Base,
    Localize,
    Siamese,
}

impl LossConfig {
    pub const ALL: [LossConfig; 3] = [LossConfig::Base, LossConfig::Localize, LossConfig::Siamese];

    pub fn name(self) -> &'static str {
        match self {
            LossConfig::Base => "base",
            LossConfig::Localize => "localize",
            LossConfig::Siamese => "siamese",
        }
    }
}

impl std::str::FromStr for LossConfig {
    type Err = MpnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(LossConfig::Base),
            "localize" => Ok(LossConfig::Localize),
            "siamese" => Ok(LossConfig::Siamese),
            other => Err(MpnError::InvalidConfig(format!("unknown loss '{other}'"))),
        }
    }
}

/// Per-label training frequencies and the derived loss weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub p: Vec<f64>,
    pub w: Vec<f64>,
}

impl ClassWeights {
    /// Uniform weights of 1.
    pub fn ones(labels: usize) -> Self {
        ClassWeights {
            p: vec![0.0; labels],
            w: vec![1.0; labels],
        }
    }
}

/// Weights from the segment labels of the training split.
///
/// `w = -ln p` for `p > 0` and `w = 1` for a label that never occurs. A label
/// present in every sample gets `w = 0`, which silences its positive term;
/// that case is logged.
pub fn class_weights(segment_labels: &[&[u8]]) -> Result<ClassWeights> {
    let n = segment_labels.len();
    if n == 0 {
        return Err(MpnError::Empty(
            "class_weights needs at least one sample".into(),
        ));
    }
    let l = segment_labels[0].len();
    let mut counts = vec![0usize; l];
    for (i, row) in segment_labels.iter().enumerate() {
        if row.len() != l {
            return Err(MpnError::shape(
                format!("segment labels of sample {i}"),
                l,
                row.len(),
            ));
        }
        for (c, &v) in counts.iter_mut().zip(row.iter()) {
            match v {
                0 => {}
                1 => *c += 1,
                other => {
                    return Err(MpnError::InvalidSample {
                        index: i,
                        reason: format!("segment label value {other} is not binary"),
                    })
                }
            }
        }
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let w = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            if pj == 0.0 {
                1.0
            } else {
                if pj == 1.0 {
                    warn!(
                        "label {j} occurs in every training sample; its positive loss weight is 0"
                    );
                }
                // -ln(1) is -0.0; report it as +0.
                (-pj.ln()).max(0.0)
            }
        })
        .collect();
    Ok(ClassWeights { p, w })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Weighted segment cross-entropy for one sample.
pub fn loss_y(y: &[f64], y_true: &[u8], weights: &ClassWeights) -> f64 {
    debug_assert_eq!(y.len(), y_true.len());
    -y.iter()
        .zip(y_true)
        .zip(&weights.w)
        .map(|((&yj, &tj), &wj)| {
            let yj = clamp_prob(yj);
            let t = f64::from(tj);
            wj * t * yj.ln() + (1.0 - t) * (1.0 - yj).ln()
        })
        .sum::<f64>()
}

/// Gradient of [`loss_y`] with respect to the logits `g` (where `y = σ(g)`).
pub fn loss_y_grad_logits(y: &[f64], y_true: &[u8], weights: &ClassWeights) -> Vec<f64> {
    y.iter()
        .zip(y_true)
        .zip(&weights.w)
        .map(|((&yj, &tj), &wj)| {
            let t = f64::from(tj);
            -wj * t * (1.0 - yj) + (1.0 - t) * yj
        })
        .collect()
}

fn check_step_shape(o: &Matrix, o_true: &[Vec<u8>]) -> Result<()> {
    let rows_ok = o.rows() == o_true.len();
    let cols_ok = o_true.iter().all(|r| r.len() == o.cols());
    if !rows_ok || !cols_ok {
        return Err(MpnError::shape(
            "stepwise labels",
            format!("{}x{}", o.rows(), o.cols()),
            format!(
                "{} rows of widths {:?}",
                o_true.len(),
                o_true.iter().map(Vec::len).collect::<Vec<_>>()
            ),
        ));
    }
    Ok(())
}

/// Mean per-entry squared error of stepwise scores.
pub fn loss_o(o: &Matrix, o_true: &[Vec<u8>]) -> Result<f64> {
    check_step_shape(o, o_true)?;
    let n = (o.rows() * o.cols()) as f64;
    if n == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (k, row) in o_true.iter().enumerate() {
        for (j, &t) in row.iter().enumerate() {
            let t = f64::from(t);
            let v = o.get(k, j);
            acc += t * (1.0 - v) * (1.0 - v) + (1.0 - t) * v * v;
        }
    }
    Ok(acc / n)
}

pub fn loss_o_grad(o: &Matrix, o_true: &[Vec<u8>]) -> Result<Matrix> {
    check_step_shape(o, o_true)?;
    let n = (o.rows() * o.cols()) as f64;
    let mut grad = Matrix::zeros(o.rows(), o.cols());
    for (k, row) in o_true.iter().enumerate() {
        for (j, &t) in row.iter().enumerate() {
            grad.set(k, j, 2.0 * (o.get(k, j) - f64::from(t)) / n);
        }
    }
    Ok(grad)
}

/// `s[ℓ] = exp(-|g_i[ℓ] - g_j[ℓ]|)`.
pub fn siamese_similarity(g_i: &[f64], g_j: &[f64]) -> Vec<f64> {
    g_i.iter()
        .zip(g_j)
        .map(|(a, b)| (-(a - b).abs()).exp())
        .collect()
}

/// Pair target: 1 where the two samples agree on the segment label.
pub fn siamese_target(y_i: &[u8], y_j: &[u8]) -> Vec<u8> {
    y_i.iter().zip(y_j).map(|(a, b)| u8::from(a == b)).collect()
}

pub fn loss_s(s: &[f64], s_true: &[u8]) -> Result<f64> {
    if s.len() != s_true.len() {
        return Err(MpnError::shape("loss_s", s.len(), s_true.len()));
    }
    if s.is_empty() {
        return Ok(0.0);
    }
    let acc: f64 = s
        .iter()
        .zip(s_true)
        .map(|(&v, &t)| {
            let t = f64::from(t);
            t * (1.0 - v) * (1.0 - v) + (1.0 - t) * v * v
        })
        .sum();
    Ok(acc / s.len() as f64)
}

/// Gradients of [`loss_s`] (through the similarity) with respect to `g_i`
/// and `g_j`. At `g_i[ℓ] == g_j[ℓ]` the subgradient 0 is used.
pub fn loss_s_grad(g_i: &[f64], g_j: &[f64], s_true: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let l = g_i.len() as f64;
    let mut di = Vec::with_capacity(g_i.len());
    let mut dj = Vec::with_capacity(g_i.len());
    for ((&a, &b), &t) in g_i.iter().zip(g_j).zip(s_true) {
        let diff = a - b;
        let s = (-diff.abs()).exp();
        let ds = 2.0 * (s - f64::from(t)) / l;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        let d = ds * (-s * sign);
        di.push(d);
        dj.push(-d);
    }
    (di, dj)
}

/// `(λ/2)·Σ ‖W‖²_F` over the eight gate weight matrices. Biases and `b_g`
/// are not penalised.
pub fn l2_penalty(model: &MpnModel, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sq: f64 = model
        .encoder
        .weights
        .iter()
        .chain(model.decoder.weights.iter())
        .map(Matrix::sum_squares)
        .sum();
    0.5 * lambda * sq
}

/// Adds `∂ l2_penalty / ∂θ = λ·W` into `grads`.
pub fn l2_penalty_grad(model: &MpnModel, lambda: f64, grads: &mut MpnGrads) {
    if lambda == 0.0 {
        return;
    }
    let pairs = model
        .encoder
        .weights
        .iter()
        .zip(grads.encoder.weights.iter_mut())
        .chain(
            model
                .decoder
                .weights
                .iter()
                .zip(grads.decoder.weights.iter_mut()),
        );
    for (w, gw) in pairs {
        for (g, v) in gw.data_mut().iter_mut().zip(w.data()) {
            *g += lambda * v;
        }
    }
}

/// Loss value split into its parts. `total` is the sum of the other four.
///
/// For the siamese composition the parts are the β- and (1-β)-weighted
/// shares averaged over pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_y: f64,
    pub l_o: f64,
    pub l_s: f64,
    pub l_reg: f64,
}

impl LossBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.l_y + self.l_o + self.l_s + self.l_reg;
        self
    }
}

/// Labels of one sample as consumed by the losses.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub segment: &'a [u8],
    pub steps: &'a [Vec<u8>],
}

/// Mixing and regularisation coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub config: LossConfig,
    pub lambda: f64,
    pub beta: f64,
}

/// Per-sample coefficients on the segment and stepwise terms, and the pair
/// coefficient, for a batch of `n` samples.
fn coefficients(config: LossConfig, n: usize, beta: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    match config {
        LossConfig::Base => (1.0 / nf, 0.0, 0.0),
        LossConfig::Localize => (1.0 / nf, 1.0 / nf, 0.0),
        LossConfig::Siamese => {
            // Each sample appears in n-1 of the n(n-1)/2 pairs.
            let pairs = nf * (nf - 1.0) / 2.0;
            let per_sample = beta * (nf - 1.0) / pairs;
            (per_sample, per_sample, (1.0 - beta) / pairs)
        }
    }
}

fn check_batch(config: LossConfig, n_pred: usize, n_target: usize) -> Result<()> {
    if n_pred != n_target {
        return Err(MpnError::shape("batch", n_pred, n_target));
    }
    if n_pred == 0 {
        return Err(MpnError::Empty("batch has no samples".into()));
    }
    if config == LossConfig::Siamese && n_pred < 2 {
        return Err(MpnError::InvalidConfig(
            "siamese loss needs at least two samples per batch".into(),
        ));
    }
    Ok(())
}

/// Batch loss value.
pub fn batch_loss(
    params: LossParams,
    model: &MpnModel,
    preds: &[Prediction],
    targets: &[Target<'_>],
    weights: &ClassWeights,
) -> Result<LossBreakdown> {
    check_batch(params.config, preds.len(), targets.len())?;
    let (cy, co, cs) = coefficients(params.config, preds.len(), params.beta);
    let mut out = LossBreakdown::default();
    for (p, t) in preds.iter().zip(targets) {
        out.l_y += cy * loss_y(&p.y, t.segment, weights);
        if co != 0.0 {
            out.l_o += co * loss_o(&p.o, t.steps)?;
        }
    }
    if cs != 0.0 {
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                let s = siamese_similarity(&preds[i].g, &preds[j].g);
                let st = siamese_target(targets[i].segment, targets[j].segment);
                out.l_s += cs * loss_s(&s, &st)?;
            }
        }
    }
    out.l_reg = l2_penalty(model, params.lambda);
    Ok(out.finish())
}

/// Batch loss together with the output adjoints of every sample. The
/// regularisation gradient is not included; add it with [`l2_penalty_grad`].
pub fn batch_loss_adjoints(
    params: LossParams,
    model: &MpnModel,
    preds: &[Prediction],
    targets: &[Target<'_>],
    weights: &ClassWeights,
) -> Result<(LossBreakdown, Vec<OutputAdjoint>)> {
    let loss = batch_loss(params, model, preds, targets, weights)?;
    let (cy, co, cs) = coefficients(params.config, preds.len(), params.beta);
    let dims = &model.dims;
    let mut adjs: Vec<OutputAdjoint> = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        let mut adj = OutputAdjoint::zeros(dims);
        for (d, v) in adj
            .dg
            .iter_mut()
            .zip(loss_y_grad_logits(&p.y, t.segment, weights))
        {
            *d = cy * v;
        }
        if co != 0.0 {
            let go = loss_o_grad(&p.o, t.steps)?;
            for (d, v) in adj.do_.data_mut().iter_mut().zip(go.data()) {
                *d = co * v;
            }
        }
        adjs.push(adj);
    }
    if cs != 0.0 {
        for i in 0..preds.len() {
            for j in i + 1..preds.len() {
                let st = siamese_target(targets[i].segment, targets[j].segment);
                let (di, dj) = loss_s_grad(&preds[i].g, &preds[j].g, &st);
                for (d, v) in adjs[i].dg.iter_mut().zip(di) {
                    *d += cs * v;
                }
                for (d, v) in adjs[j].dg.iter_mut().zip(dj) {
                    *d += cs * v;
                }
            }
        }
    }
    Ok((loss, adjs))
}
