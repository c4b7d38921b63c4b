//! Single-layer LSTM cell with a cached forward pass and exact reverse-mode
//! gradients for backpropagation through time.
//!
//! Every gate sees the concatenation `[h_{t-1}, x_t]`, so each weight matrix
//! is `L × (L + m)`:
//!
//! ```text
//! f_t  = σ(W_f·[h_{t-1}, x_t] + b_f)
//! i_t  = σ(W_i·[h_{t-1}, x_t] + b_i)
//! ξ̃_t  = tanh(W_ξ·[h_{t-1}, x_t] + b_ξ)
//! ξ_t  = f_t ⊙ ξ_{t-1} + i_t ⊙ ξ̃_t
//! q_t  = σ(W_q·[h_{t-1}, x_t] + b_q)
//! h_t  = q_t ⊙ tanh(ξ_t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::tensor::{affine, sigmoid_scalar, Matrix, Rng, Vector};

/// Gate index into [`LstmParams::weights`] / [`LstmParams::biases`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Candidate => "xi",
            Gate::Output => "q",
        }
    }
}

/// Scalar parameter count of an LSTM with `hidden` units and `input` inputs.
pub fn param_count(hidden: usize, input: usize) -> usize {
    4 * (hidden * hidden + hidden * input + hidden)
}

/// Weight initialisation rule.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum InitRule {
    /// Weights uniform on `[-a, a]`, `a = sqrt(6 / (L + m + L))`; forget
    /// bias 1, other biases 0.
    #[default]
    Glorot,
    /// Weights uniform on `[-a, a]` for the given `a`, all biases 0.
    Uniform(f64),
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    hidden: usize,
    input: usize,
    /// `W_f, W_i, W_ξ, W_q`, each `hidden × (hidden + input)`.
    pub weights: [Matrix; 4],
    /// `b_f, b_i, b_ξ, b_q`, each of length `hidden`.
    pub biases: [Vector; 4],
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = || Matrix::zeros(hidden, hidden + input);
        let b = || vec![0.0; hidden];
        LstmParams {
            hidden,
            input,
            weights: [w(), w(), w(), w()],
            biases: [b(), b(), b(), b()],
        }
    }

    pub fn init(rng: &mut Rng, hidden: usize, input: usize, rule: InitRule) -> Self {
        let mut p = LstmParams::zeros(hidden, input);
        let bound = match rule {
            InitRule::Glorot => (6.0 / (2 * hidden + input) as f64).sqrt(),
            InitRule::Uniform(a) => a,
            InitRule::Zeros => return p,
        };
        for w in p.weights.iter_mut() {
            for v in w.data_mut() {
                *v = rng.uniform(-bound, bound);
            }
        }
        if rule == InitRule::Glorot {
            p.biases[Gate::Forget as usize].fill(1.0);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn weight(&self, g: Gate) -> &Matrix {
        &self.weights[g as usize]
    }

    pub fn bias(&self, g: Gate) -> &[f64] {
        &self.biases[g as usize]
    }

    /// Number of scalar entries actually stored.
    pub fn scalar_count(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameter tensors in storage order: `W_f, W_i, W_ξ, W_q, b_f, b_i, b_ξ, b_q`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.weights.iter().map(Matrix::data).collect();
        out.extend(self.biases.iter().map(Vec::as_slice));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let LstmParams {
            weights, biases, ..
        } = self;
        let mut out: Vec<&mut [f64]> = weights.iter_mut().map(Matrix::data_mut).collect();
        out.extend(biases.iter_mut().map(Vec::as_mut_slice));
        out
    }

    /// Names matching [`tensors`](Self::tensors), with shapes.
    pub fn tensor_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::with_capacity(8);
        for g in Gate::ALL {
            out.push((
                format!("W_{}", g.name()),
                self.hidden,
                self.hidden + self.input,
            ));
        }
        for g in Gate::ALL {
            out.push((format!("b_{}", g.name()), 1, self.hidden));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    /// Cell state ξ.
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Intermediates of one forward step, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub x: Vector,
    pub h_prev: Vector,
    pub c_prev: Vector,
    pub f: Vector,
    pub i: Vector,
    pub cand: Vector,
    pub q: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

impl StepCache {
    pub fn state(&self) -> LstmState {
        LstmState {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }
}

/// One cache entry per forward step, in order.
pub type StepTape = Vec<StepCache>;

/// Gradients of a loss with respect to everything an LSTM run consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGrads {
    pub params: LstmParams,
    pub d_init: LstmState,
    pub d_inputs: Vec<Vector>,
}

pub fn lstm_step(
    params: &LstmParams,
    prev: &LstmState,
    x: &[f64],
) -> Result<(LstmState, StepCache)> {
    let l = params.hidden;
    if x.len() != params.input {
        return Err(MpnError::shape("lstm_step input", params.input, x.len()));
    }
    if prev.h.len() != l || prev.c.len() != l {
        return Err(MpnError::shape(
            "lstm_step state",
            l,
            format!("h {}, c {}", prev.h.len(), prev.c.len()),
        ));
    }
    let mut hx = Vec::with_capacity(l + x.len());
    hx.extend_from_slice(&prev.h);
    hx.extend_from_slice(x);

    let pre = |g: Gate| affine(params.weight(g), &hx, params.bias(g));
    let f: Vector = pre(Gate::Forget)?.into_iter().map(sigmoid_scalar).collect();
    let i: Vector = pre(Gate::Input)?.into_iter().map(sigmoid_scalar).collect();
    let cand: Vector = pre(Gate::Candidate)?.into_iter().map(f64::tanh).collect();
    let q: Vector = pre(Gate::Output)?.into_iter().map(sigmoid_scalar).collect();

    let c: Vector = (0..l).map(|k| f[k] * prev.c[k] + i[k] * cand[k]).collect();
    let tanh_c: Vector = c.iter().map(|v| v.tanh()).collect();
    let h: Vector = q.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        f,
        i,
        cand,
        q,
        c,
        tanh_c,
        h,
    };
    Ok((state, cache))
}

/// Runs the cell over `xs`, returning the state after each step.
pub fn lstm_forward(
    params: &LstmParams,
    init: &LstmState,
    xs: &[Vector],
) -> Result<(Vec<LstmState>, StepTape)> {
    let mut states = Vec::with_capacity(xs.len());
    let mut tape = Vec::with_capacity(xs.len());
    let mut cur = init.clone();
    for (t, x) in xs.iter().enumerate() {
        let (next, cache) = lstm_step(params, &cur, x).map_err(|e| match e {
            MpnError::DimensionMismatch {
                expected, found, ..
            } => MpnError::DimensionMismatch {
                context: format!("lstm_forward step {t}"),
                expected,
                found,
            },
            other => other,
        })?;
        states.push(next.clone());
        tape.push(cache);
        cur = next;
    }
    Ok((states, tape))
}

/// Backward through one step.
///
/// `dh` and `dc` are the total adjoints on this step's outputs `h_t`, `ξ_t`.
/// Parameter gradients are accumulated into `grads`; returns the adjoints on
/// `(h_{t-1}, ξ_{t-1}, x_t)`.
pub fn step_backward(
    params: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> (Vector, Vector, Vector) {
    let l = params.hidden;
    let mut dc_total = dc.to_vec();
    let mut dpre: [Vector; 4] = [vec![0.0; l], vec![0.0; l], vec![0.0; l], vec![0.0; l]];
    let mut dc_prev = vec![0.0; l];
    for k in 0..l {
        let dq = dh[k] * cache.tanh_c[k];
        dc_total[k] += dh[k] * cache.q[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
        let dck = dc_total[k];
        let df = dck * cache.c_prev[k];
        let di = dck * cache.cand[k];
        let dcand = dck * cache.i[k];
        dc_prev[k] = dck * cache.f[k];

        dpre[Gate::Forget as usize][k] = df * cache.f[k] * (1.0 - cache.f[k]);
        dpre[Gate::Input as usize][k] = di * cache.i[k] * (1.0 - cache.i[k]);
        dpre[Gate::Candidate as usize][k] = dcand * (1.0 - cache.cand[k] * cache.cand[k]);
        dpre[Gate::Output as usize][k] = dq * cache.q[k] * (1.0 - cache.q[k]);
    }

    let mut hx = Vec::with_capacity(l + cache.x.len());
    hx.extend_from_slice(&cache.h_prev);
    hx.extend_from_slice(&cache.x);

    let mut dhx = vec![0.0; hx.len()];
    for g in Gate::ALL {
        let gi = g as usize;
        grads.weights[gi].add_outer(&dpre[gi], &hx);
        for (b, d) in grads.biases[gi].iter_mut().zip(&dpre[gi]) {
            *b += d;
        }
        params.weights[gi].add_transposed_mul(&dpre[gi], &mut dhx);
    }
    let dx = dhx.split_off(l);
    (dhx, dc_prev, dx)
}

/// Full BPTT over a tape.
///
/// `dh[t]` is the adjoint flowing into `h_t` from outside the recurrence and
/// `d_final` the adjoint on the last state.
pub fn lstm_backward(
    params: &LstmParams,
    tape: &[StepCache],
    dh: &[Vector],
    d_final: &LstmState,
) -> Result<LstmGrads> {
    let l = params.hidden;
    if dh.len() != tape.len() {
        return Err(MpnError::shape(
            "lstm_backward adjoint count",
            tape.len(),
            dh.len(),
        ));
    }
    if d_final.h.len() != l || d_final.c.len() != l {
        return Err(MpnError::shape(
            "lstm_backward final adjoint",
            l,
            format!("h {}, c {}", d_final.h.len(), d_final.c.len()),
        ));
    }
    if let Some((t, d)) = dh.iter().enumerate().find(|(_, d)| d.len() != l) {
        return Err(MpnError::shape(
            format!("lstm_backward adjoint at step {t}"),
            l,
            d.len(),
        ));
    }

    let mut grads = LstmParams::zeros(l, params.input);
    let mut d_inputs = vec![Vec::new(); tape.len()];
    let mut carry_h = d_final.h.clone();
    let mut carry_c = d_final.c.clone();
    for t in (0..tape.len()).rev() {
        let dh_t: Vector = dh[t].iter().zip(&carry_h).map(|(a, b)| a + b).collect();
        let (dh_prev, dc_prev, dx) = step_backward(params, &tape[t], &dh_t, &carry_c, &mut grads);
        d_inputs[t] = dx;
        carry_h = dh_prev;
        carry_c = dc_prev;
    }
    Ok(LstmGrads {
        params: grads,
        d_init: LstmState {
            h: carry_h,
            c: carry_c,
        },
        d_inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn param_count_fixtures() {
        assert_eq!(param_count(1, 1), 12);
        assert_eq!(param_count(2, 5), 64);
        assert_eq!(param_count(6, 26), 792);
        for l in 1..5 {
            for m in 0..7 {
                assert_eq!(LstmParams::zeros(l, m).scalar_count(), param_count(l, m));
            }
        }
    }

    #[test]
    fn zero_params_step() {
        let p = LstmParams::zeros(2, 3);
        let (s, cache) = lstm_step(&p, &LstmState::zeros(2), &[1.0, -2.0, 0.3]).unwrap();
        assert_eq!(cache.f, vec![0.5, 0.5]);
        assert_eq!(cache.i, vec![0.5, 0.5]);
        assert_eq!(cache.q, vec![0.5, 0.5]);
        assert_eq!(cache.cand, vec![0.0, 0.0]);
        assert_eq!(s.c, vec![0.0, 0.0]);
        assert_eq!(s.h, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_carry_cell() {
        let p = LstmParams::zeros(1, 1);
        let prev = LstmState {
            h: vec![0.7],
            c: vec![1.0],
        };
        let (s, _) = lstm_step(&p, &prev, &[2.0]).unwrap();
        assert_eq!(s.c, vec![0.5]);
        assert!((s.h[0] - 0.231_058_578_630_004_88).abs() < 1e-12);
    }

    #[test]
    fn scalar_oracle() {
        // L = 1, m = 1, all weights 0.1, biases 0, zero state, x = 1.
        let mut p = LstmParams::zeros(1, 1);
        for w in p.weights.iter_mut() {
            w.data_mut().fill(0.1);
        }
        let (s, _) = lstm_step(&p, &LstmState::zeros(1), &[1.0]).unwrap();
        let (h0, c0, x) = (0.0, 0.0, 1.0);
        let pre = 0.1 * h0 + 0.1 * x;
        let f = sig(pre);
        let i = sig(pre);
        let cand = f64::tanh(pre);
        let q = sig(pre);
        let c = f * c0 + i * cand;
        let h = q * c.tanh();
        assert!((s.h[0] - h).abs() < 1e-12);
        assert!((s.c[0] - c).abs() < 1e-12);
    }

    #[test]
    fn forward_composition() {
        let mut rng = Rng::new(3);
        let p = LstmParams::init(&mut rng, 3, 2, InitRule::Glorot);
        let init = LstmState::zeros(3);
        let (states, tape) = lstm_forward(&p, &init, &[]).unwrap();
        assert!(states.is_empty() && tape.is_empty());

        let xs: Vec<Vector> = (0..3).map(|t| vec![t as f64 * 0.3, -0.2]).collect();
        let (states, tape) = lstm_forward(&p, &init, &xs).unwrap();
        let mut cur = init;
        for (t, x) in xs.iter().enumerate() {
            let (next, cache) = lstm_step(&p, &cur, x).unwrap();
            assert_eq!(next, states[t]);
            assert_eq!(cache, tape[t]);
            cur = next;
        }
    }

    #[test]
    fn forward_reports_bad_step() {
        let p = LstmParams::zeros(2, 2);
        let xs = vec![vec![0.0, 0.0], vec![0.0]];
        let err = lstm_forward(&p, &LstmState::zeros(2), &xs)
            .unwrap_err()
            .to_string();
        assert!(err.contains("step 1"), "{err}");
    }

    #[test]
    fn init_contract() {
        let a = LstmParams::init(&mut Rng::new(11), 4, 5, InitRule::Glorot);
        let b = LstmParams::init(&mut Rng::new(11), 4, 5, InitRule::Glorot);
        assert_eq!(a, b);
        let bound = (6.0f64 / 13.0).sqrt();
        assert!(a
            .weights
            .iter()
            .all(|w| w.data().iter().all(|v| v.abs() <= bound)));
        assert_eq!(a.bias(Gate::Forget), &[1.0; 4]);
        assert_eq!(a.bias(Gate::Input), &[0.0; 4]);
    }

    #[test]
    fn zero_adjoint_gives_zero_grads() {
        let p = LstmParams::init(&mut Rng::new(5), 2, 2, InitRule::Glorot);
        let xs: Vec<Vector> = vec![vec![0.1, 0.2]; 4];
        let (_, tape) = lstm_forward(&p, &LstmState::zeros(2), &xs).unwrap();
        let g = lstm_backward(&p, &tape, &vec![vec![0.0; 2]; 4], &LstmState::zeros(2)).unwrap();
        assert!(g
            .params
            .tensors()
            .iter()
            .all(|t| t.iter().all(|v| *v == 0.0)));
        assert!(g.d_inputs.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_length_mismatch() {
        let p = LstmParams::zeros(2, 1);
        let (_, tape) = lstm_forward(&p, &LstmState::zeros(2), &[vec![0.0], vec![1.0]]).unwrap();
        assert!(lstm_backward(&p, &tape, &[vec![0.0; 2]], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn causality_of_input_grads() {
        let p = LstmParams::init(&mut Rng::new(9), 3, 2, InitRule::Glorot);
        let xs: Vec<Vector> = (0..5).map(|t| vec![0.1 * t as f64, 0.5]).collect();
        let (_, tape) = lstm_forward(&p, &LstmState::zeros(3), &xs).unwrap();
        let mut dh = vec![vec![0.0; 3]; 5];
        dh[2] = vec![1.0, -0.5, 0.25];
        let g = lstm_backward(&p, &tape, &dh, &LstmState::zeros(3)).unwrap();
        assert!(g.d_inputs[3]
            .iter()
            .chain(&g.d_inputs[4])
            .all(|v| *v == 0.0));
        assert!(g.d_inputs[2].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn hidden_state_bounded() {
        let p = LstmParams::init(&mut Rng::new(1), 3, 2, InitRule::Uniform(1.5));
        let xs: Vec<Vector> = (0..20)
            .map(|t| vec![3.0 * (t as f64).sin(), -2.0])
            .collect();
        let (states, _) = lstm_forward(&p, &LstmState::zeros(3), &xs).unwrap();
        assert!(states.iter().flat_map(|s| &s.h).all(|v| v.abs() < 1.0));
    }
}
