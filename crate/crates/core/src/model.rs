//! The multi-label predictive network.
//!
//! An encoder LSTM reads the history `z_{1..τ}` together with the context
//! `c_{1..τ}`; a decoder LSTM starts from the encoder's final state and reads
//! the future context `c_{τ+1..T}`. Both have `L` units, one per label.
//!
//! * encoder input at step t: `[z_t ‖ c_t ‖ h_{t-1}]`, `h_0 = 0`
//! * decoder input at step t: `[c_t ‖ σ(h_{t-1})]`, seeded by the encoder's `h_τ`
//! * embedding `g = Σ_{t>τ} h_t + b_g`, segment output `y = σ(g)`
//! * stepwise output `o_t = σ(h_t) ⊙ σ(g)`
//!
//! The feedback inputs are built by [`encoder_feedback`] and
//! [`decoder_feedback`]; swapping either only requires touching that function
//! and its adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::lstm::{self, InitRule, LstmParams, LstmState, StepCache};
use crate::tensor::{sigmoid, sigmoid_scalar, Matrix, Rng, Vector};

/// Shape metadata: `L` labels (= hidden units), observation and context
/// widths, history length `τ` and total length `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpnDims {
    pub labels: usize,
    pub obs_dim: usize,
    pub ctx_dim: usize,
    pub history: usize,
    pub total: usize,
}

impl MpnDims {
    pub fn horizon(&self) -> usize {
        self.total - self.history
    }

    pub fn encoder_input(&self) -> usize {
        self.obs_dim + self.ctx_dim + self.labels
    }

    pub fn decoder_input(&self) -> usize {
        self.ctx_dim + self.labels
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels == 0 {
            return Err(MpnError::InvalidConfig("need at least one label".into()));
        }
        if self.history >= self.total {
            return Err(MpnError::InvalidConfig(format!(
                "history length {} must be below total length {}",
                self.history, self.total
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpnModel {
    pub dims: MpnDims,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub b_g: Vector,
}

/// Gradient (or any other quantity) shaped like the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MpnGrads {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub b_g: Vector,
}

impl MpnGrads {
    pub fn zeros(dims: &MpnDims) -> Self {
        MpnGrads {
            encoder: LstmParams::zeros(dims.labels, dims.encoder_input()),
            decoder: LstmParams::zeros(dims.labels, dims.decoder_input()),
            b_g: vec![0.0; dims.labels],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        out.extend(self.decoder.tensors());
        out.push(&self.b_g);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let MpnGrads {
            encoder,
            decoder,
            b_g,
        } = self;
        let mut out = encoder.tensors_mut();
        out.extend(decoder.tensors_mut());
        out.push(b_g.as_mut_slice());
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &MpnGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl MpnModel {
    pub fn zeros(dims: MpnDims) -> Result<Self> {
        dims.validate()?;
        Ok(MpnModel {
            dims,
            encoder: LstmParams::zeros(dims.labels, dims.encoder_input()),
            decoder: LstmParams::zeros(dims.labels, dims.decoder_input()),
            b_g: vec![0.0; dims.labels],
        })
    }

    /// Random initialisation; `b_g` starts at zero.
    pub fn init(dims: MpnDims, rng: &mut Rng, rule: InitRule) -> Result<Self> {
        dims.validate()?;
        let encoder = LstmParams::init(rng, dims.labels, dims.encoder_input(), rule);
        let decoder = LstmParams::init(rng, dims.labels, dims.decoder_input(), rule);
        Ok(MpnModel {
            dims,
            encoder,
            decoder,
            b_g: vec![0.0; dims.labels],
        })
    }

    /// Parameter tensors in file/flat order: encoder `W_f, W_i, W_ξ, W_q,
    /// b_f, b_i, b_ξ, b_q`, then the decoder in the same order, then `b_g`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        out.extend(self.decoder.tensors());
        out.push(&self.b_g);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let MpnModel {
            encoder,
            decoder,
            b_g,
            ..
        } = self;
        let mut out = encoder.tensors_mut();
        out.extend(decoder.tensors_mut());
        out.push(b_g.as_mut_slice());
        out
    }

    /// Human-readable names for the entries of [`tensors`](Self::tensors).
    pub fn tensor_names(&self) -> Vec<(String, usize, usize)> {
        let mut out: Vec<_> = self
            .encoder
            .tensor_layout()
            .into_iter()
            .map(|(n, r, c)| (format!("encoder.{n}"), r, c))
            .collect();
        out.extend(
            self.decoder
                .tensor_layout()
                .into_iter()
                .map(|(n, r, c)| (format!("decoder.{n}"), r, c)),
        );
        out.push(("b_g".to_string(), 1, self.dims.labels));
        out
    }

    /// Name of flat coordinate `index`, e.g. `decoder.W_i[1,3]`.
    pub fn coordinate_name(&self, mut index: usize) -> String {
        for (name, rows, cols) in self.tensor_names() {
            let n = rows * cols;
            if index < n {
                return if rows == 1 {
                    format!("{name}[{index}]")
                } else {
                    format!("{name}[{},{}]", index / cols, index % cols)
                };
            }
            index -= n;
        }
        "out-of-range".to_string()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(MpnError::shape("MpnModel::set_flat", n, flat.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_inputs(&self, z: &Matrix, c: &Matrix) -> Result<()> {
        let d = &self.dims;
        if z.shape() != (d.history, d.obs_dim) {
            return Err(MpnError::shape(
                "observations z",
                format!("{}x{}", d.history, d.obs_dim),
                format!("{}x{}", z.rows(), z.cols()),
            ));
        }
        if c.shape() != (d.total, d.ctx_dim) {
            return Err(MpnError::shape(
                "context c",
                format!("{}x{}", d.total, d.ctx_dim),
                format!("{}x{}", c.rows(), c.cols()),
            ));
        }
        Ok(())
    }
}

/// Extra encoder inputs derived from the previous hidden state.
pub fn encoder_feedback(h_prev: &[f64]) -> Vector {
    h_prev.to_vec()
}

/// Adjoint of [`encoder_feedback`]: maps `d feedback` to `d h_prev`.
fn encoder_feedback_adjoint(_h_prev: &[f64], d_fb: &[f64]) -> Vector {
    d_fb.to_vec()
}

/// Extra decoder inputs derived from the previous hidden state.
pub fn decoder_feedback(h_prev: &[f64]) -> Vector {
    sigmoid(h_prev)
}

fn decoder_feedback_adjoint(h_prev: &[f64], d_fb: &[f64]) -> Vector {
    h_prev
        .iter()
        .zip(d_fb)
        .map(|(&h, &d)| {
            let s = sigmoid_scalar(h);
            d * s * (1.0 - s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Embedding, length `L`.
    pub g: Vector,
    /// Segment probabilities `σ(g)`.
    pub y: Vector,
    /// Stepwise scores, `(T-τ) × L`.
    pub o: Matrix,
    /// Decoder hidden states, `(T-τ) × L`.
    pub decoder_hidden: Matrix,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct MpnTape {
    pub encoder: Vec<StepCache>,
    pub decoder: Vec<StepCache>,
    pub prediction: Prediction,
}

/// Upstream adjoints on the network outputs. Any of them may be zero.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputAdjoint {
    pub dg: Vector,
    pub dy: Vector,
    pub do_: Matrix,
}

impl OutputAdjoint {
    pub fn zeros(dims: &MpnDims) -> Self {
        OutputAdjoint {
            dg: vec![0.0; dims.labels],
            dy: vec![0.0; dims.labels],
            do_: Matrix::zeros(dims.horizon(), dims.labels),
        }
    }
}

pub fn mpn_forward(model: &MpnModel, z: &Matrix, c: &Matrix) -> Result<(Prediction, MpnTape)> {
    model.check_inputs(z, c)?;
    let d = model.dims;
    let l = d.labels;

    let mut state = LstmState::zeros(l);
    let mut enc_tape = Vec::with_capacity(d.history);
    for t in 0..d.history {
        let mut x = Vec::with_capacity(d.encoder_input());
        x.extend_from_slice(z.row(t));
        x.extend_from_slice(c.row(t));
        x.extend(encoder_feedback(&state.h));
        let (next, cache) = lstm::lstm_step(&model.encoder, &state, &x)?;
        enc_tape.push(cache);
        state = next;
    }

    let horizon = d.horizon();
    let mut dec_tape = Vec::with_capacity(horizon);
    let mut hidden = Matrix::zeros(horizon, l);
    let mut g = model.b_g.clone();
    for k in 0..horizon {
        let t = d.history + k;
        let mut x = Vec::with_capacity(d.decoder_input());
        x.extend_from_slice(c.row(t));
        x.extend(decoder_feedback(&state.h));
        let (next, cache) = lstm::lstm_step(&model.decoder, &state, &x)?;
        for (gi, hi) in g.iter_mut().zip(&next.h) {
            *gi += hi;
        }
        hidden.row_mut(k).copy_from_slice(&next.h);
        dec_tape.push(cache);
        state = next;
    }

    let y = sigmoid(&g);
    let mut o = Matrix::zeros(horizon, l);
    for k in 0..horizon {
        for j in 0..l {
            o.set(k, j, sigmoid_scalar(hidden.get(k, j)) * y[j]);
        }
    }
    let prediction = Prediction {
        g,
        y,
        o,
        decoder_hidden: hidden,
    };
    let tape = MpnTape {
        encoder: enc_tape,
        decoder: dec_tape,
        prediction: prediction.clone(),
    };
    Ok((prediction, tape))
}

/// Forward pass without keeping the tape.
pub fn predict(model: &MpnModel, z: &Matrix, c: &Matrix) -> Result<Prediction> {
    mpn_forward(model, z, c).map(|(p, _)| p)
}

pub fn mpn_backward(model: &MpnModel, tape: &MpnTape, adj: &OutputAdjoint) -> Result<MpnGrads> {
    let d = model.dims;
    let l = d.labels;
    let horizon = d.horizon();
    if adj.dg.len() != l || adj.dy.len() != l || adj.do_.shape() != (horizon, l) {
        return Err(MpnError::shape(
            "mpn_backward adjoint",
            format!("dg {l}, dy {l}, do {horizon}x{l}"),
            format!(
                "dg {}, dy {}, do {}x{}",
                adj.dg.len(),
                adj.dy.len(),
                adj.do_.rows(),
                adj.do_.cols()
            ),
        ));
    }
    let pred = &tape.prediction;
    let y = &pred.y;

    // dL/dg collects the direct adjoint, the path through y and the path
    // through σ(g) inside every o_t.
    let mut dg = adj.dg.clone();
    for j in 0..l {
        let dsig = y[j] * (1.0 - y[j]);
        let mut through_o = 0.0;
        for k in 0..horizon {
            through_o += adj.do_.get(k, j) * sigmoid_scalar(pred.decoder_hidden.get(k, j));
        }
        dg[j] += (adj.dy[j] + through_o) * dsig;
    }

    let mut grads = MpnGrads::zeros(&d);
    grads.b_g.copy_from_slice(&dg);

    let mut carry_h = vec![0.0; l];
    let mut carry_c = vec![0.0; l];
    for k in (0..horizon).rev() {
        let cache = &tape.decoder[k];
        let dh: Vector = (0..l)
            .map(|j| {
                let s = sigmoid_scalar(cache.h[j]);
                carry_h[j] + dg[j] + adj.do_.get(k, j) * y[j] * s * (1.0 - s)
            })
            .collect();
        let (mut dh_prev, dc_prev, dx) =
            lstm::step_backward(&model.decoder, cache, &dh, &carry_c, &mut grads.decoder);
        let d_fb = decoder_feedback_adjoint(&cache.h_prev, &dx[d.ctx_dim..]);
        for (a, b) in dh_prev.iter_mut().zip(&d_fb) {
            *a += b;
        }
        carry_h = dh_prev;
        carry_c = dc_prev;
    }

    for t in (0..d.history).rev() {
        let cache = &tape.encoder[t];
        let (mut dh_prev, dc_prev, dx) = lstm::step_backward(
            &model.encoder,
            cache,
            &carry_h,
            &carry_c,
            &mut grads.encoder,
        );
        let d_fb = encoder_feedback_adjoint(&cache.h_prev, &dx[d.obs_dim + d.ctx_dim..]);
        for (a, b) in dh_prev.iter_mut().zip(&d_fb) {
            *a += b;
        }
        carry_h = dh_prev;
        carry_c = dc_prev;
    }
    Ok(grads)
}
