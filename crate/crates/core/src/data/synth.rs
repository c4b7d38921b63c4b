//! Plant-like synthetic multi-label sequences.
//!
//! Each context channel is a piecewise-constant setpoint schedule on
//! `[-1, 1]`: the level starts random and at every later step is redrawn
//! with that channel's probability `jump_prob[k]`. With `levels >= 2` a level is drawn
//! uniformly from `levels` evenly spaced values `-1, ..., 1`; with
//! `levels == 0` it is uniform on `[-1, 1]`. Sensor `k` follows setpoint channel
//! `k mod d_c` through a first-order lag toward `c + b_k`, where `b_k` is a
//! per-sample calibration offset uniform on `[-bias_range, bias_range]`:
//!
//! ```text
//! x_k(t) = x_k(t-1) + lag · (c(t) + b_k - x_k(t-1)),   x_k(0) = c(1) + b_k
//! z_k(t) = x_k(t) + noise · clamp(N(0,1), -4, 4)
//! ```
//!
//! The lag error `c(t) + b_k - x_k(t)` is a decayed sum of recent setpoint
//! jumps. Label ℓ watches the statistic
//!
//! ```text
//! s_ℓ(t) = Σ_{(k, sign) ∈ sensors_ℓ} sign · (c_k(t) - x_k(t))
//! ```
//!
//! and triggers at step `t` when `s_ℓ(t) > threshold_ℓ · rarity_ℓ`. The fault
//! starts `onset_delay` steps later and stays on for a duration drawn
//! uniformly from `persistence` (inclusive); overlapping faults merge. Only
//! faults starting inside the forecast window are labelled, so with a delay
//! `d` the triggers that matter lie in steps `τ+1-d ..= T-d`.
//! Durations come from a stream separate from the process, so raising a
//! threshold changes nothing but that label's truth.
//!
//! Magnitudes are bounded: `|c| ≤ 1`, `|x| ≤ 1 + bias_range`,
//! `|z| ≤ 1 + bias_range + 4·noise`.

use serde::{Deserialize, Serialize};

use super::{segment_from_steps, DataSource, DatasetMeta, Sample};
use crate::error::{MpnError, Result};
use crate::tensor::{derive_seed, Matrix, Rng};

/// One term of a trigger statistic: sensor index and sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerTerm {
    pub sensor: usize,
    pub sign: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub name: String,
    pub terms: Vec<TriggerTerm>,
    pub threshold: f64,
    pub rarity: f64,
}

impl TriggerSpec {
    pub fn effective_threshold(&self) -> f64 {
        self.threshold * self.rarity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub history: usize,
    pub total: usize,
    pub obs_dim: usize,
    pub ctx_dim: usize,
    pub triggers: Vec<TriggerSpec>,
    /// Inclusive range of fault durations in steps.
    pub persistence: (usize, usize),
    /// Steps between a trigger and the onset of the fault it causes.
    pub onset_delay: usize,
    pub lag: f64,
    pub noise: f64,
    /// Per-step probability of redrawing each context channel's level.
    pub jump_prob: Vec<f64>,
    /// Number of discrete setpoint levels, or 0 for continuous levels.
    pub levels: usize,
    pub bias_range: f64,
    pub seed: u64,
}

fn term(sensor: usize, sign: f64) -> TriggerTerm {
    TriggerTerm { sensor, sign }
}

fn trigger(name: &str, terms: Vec<TriggerTerm>, threshold: f64, rarity: f64) -> TriggerSpec {
    TriggerSpec {
        name: name.to_string(),
        terms,
        threshold,
        rarity,
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            history: 20,
            total: 30,
            obs_dim: 3,
            ctx_dim: 3,
            triggers: vec![
                trigger("rise_a", vec![term(0, 1.0)], 0.5, 1.0),
                trigger("drop_b", vec![term(1, -1.0)], 0.5, 1.0),
                trigger("surge_b", vec![term(1, 1.0)], 0.5, 2.4),
                trigger("rise_c", vec![term(2, 1.0)], 0.5, 1.0),
            ],
            persistence: (2, 4),
            onset_delay: 3,
            lag: 0.3,
            noise: 0.05,
            jump_prob: vec![0.1, 0.1, 0.006],
            levels: 3,
            bias_range: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn labels(&self) -> usize {
        self.triggers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MpnError::InvalidConfig(m));
        if self.history >= self.total {
            return bad(format!(
                "history {} must be below total {}",
                self.history, self.total
            ));
        }
        if self.triggers.is_empty() {
            return bad("need at least one trigger".into());
        }
        if self.ctx_dim == 0 {
            return bad("need at least one context channel".into());
        }
        if !(self.lag > 0.0 && self.lag < 1.0) {
            return bad(format!("lag {} must lie in (0, 1)", self.lag));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!(
                "noise {} must be finite and non-negative",
                self.noise
            ));
        }
        if self.jump_prob.len() != self.ctx_dim {
            return bad(format!(
                "{} jump probabilities for {} context channels",
                self.jump_prob.len(),
                self.ctx_dim
            ));
        }
        if let Some(p) = self.jump_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("jump probability {p} must lie in [0, 1]"));
        }
        if self.levels == 1 {
            return bad("setpoint levels must be 0 (continuous) or at least 2".into());
        }
        if !(self.bias_range >= 0.0 && self.bias_range.is_finite()) {
            return bad(format!(
                "bias range {} must be finite and non-negative",
                self.bias_range
            ));
        }
        let (lo, hi) = self.persistence;
        if lo == 0 || lo > hi {
            return bad(format!(
                "persistence range {lo}..={hi} is empty or starts at 0"
            ));
        }
        for t in &self.triggers {
            if !(t.threshold > 0.0 && t.threshold.is_finite()) {
                return bad(format!("trigger {} threshold must be positive", t.name));
            }
            if !(t.rarity > 0.0 && t.rarity.is_finite()) {
                return bad(format!("trigger {} rarity must be positive", t.name));
            }
            if t.terms.is_empty() {
                return bad(format!("trigger {} has no terms", t.name));
            }
            if let Some(k) = t.terms.iter().find(|k| k.sensor >= self.obs_dim) {
                return bad(format!(
                    "trigger {} uses sensor {} of {}",
                    t.name, k.sensor, self.obs_dim
                ));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            history: self.history,
            total: self.total,
            labels: self.labels(),
            obs_dim: self.obs_dim,
            ctx_dim: self.ctx_dim,
            label_names: self.triggers.iter().map(|t| t.name.clone()).collect(),
            source: DataSource::Synthetic,
        }
    }
}

/// Generates `n` samples. Sample `i` draws its process from
/// `derive_seed(seed, 2i)` and its fault durations from
/// `derive_seed(seed, 2i + 1)`.
pub fn synth_generate(config: &SynthConfig, n: usize) -> Result<(DatasetMeta, Vec<Sample>)> {
    config.validate()?;
    let samples = (0..n)
        .map(|i| {
            let i = i as u64;
            generate_one(
                config,
                &mut Rng::new(derive_seed(config.seed, 2 * i)),
                &mut Rng::new(derive_seed(config.seed, 2 * i + 1)),
            )
        })
        .collect();
    Ok((config.meta(), samples))
}

fn draw_level(cfg: &SynthConfig, rng: &mut Rng) -> f64 {
    if cfg.levels == 0 {
        rng.uniform(-1.0, 1.0)
    } else {
        -1.0 + 2.0 * rng.below(cfg.levels) as f64 / (cfg.levels - 1) as f64
    }
}

fn generate_one(cfg: &SynthConfig, process: &mut Rng, durations: &mut Rng) -> Sample {
    let (tau, total) = (cfg.history, cfg.total);
    let mut c = Matrix::zeros(total, cfg.ctx_dim);
    for k in 0..cfg.ctx_dim {
        let mut level = draw_level(cfg, process);
        for t in 0..total {
            if t > 0 && process.next_f64() < cfg.jump_prob[k] {
                level = draw_level(cfg, process);
            }
            c.set(t, k, level);
        }
    }

    let bias: Vec<f64> = (0..cfg.obs_dim)
        .map(|_| process.uniform(-cfg.bias_range, cfg.bias_range))
        .collect();
    let channel = |k: usize| k % cfg.ctx_dim;
    let mut x: Vec<f64> = (0..cfg.obs_dim)
        .map(|k| c.get(0, channel(k)) + bias[k])
        .collect();
    let mut z = Matrix::zeros(tau, cfg.obs_dim);
    let mut labels = vec![vec![0u8; cfg.labels()]; total - tau];
    let (dmin, dmax) = cfg.persistence;

    for t in 0..total {
        for k in 0..cfg.obs_dim {
            x[k] += cfg.lag * (c.get(t, channel(k)) + bias[k] - x[k]);
        }
        if t < tau {
            for k in 0..cfg.obs_dim {
                let e = process.normal().clamp(-4.0, 4.0);
                z.set(t, k, x[k] + cfg.noise * e);
            }
        }
        let onset = t + cfg.onset_delay;
        for (l, trig) in cfg.triggers.iter().enumerate() {
            // One duration per (label, step) whether or not it fires.
            let d = dmin + durations.below(dmax - dmin + 1);
            if onset < tau || onset >= total {
                continue;
            }
            let s: f64 = trig
                .terms
                .iter()
                .map(|tt| tt.sign * (c.get(t, channel(tt.sensor)) - x[tt.sensor]))
                .sum();
            if s > trig.effective_threshold() {
                for row in labels.iter_mut().skip(onset - tau).take(d) {
                    row[l] = 1;
                }
            }
        }
    }

    Sample {
        z,
        c,
        y_true: segment_from_steps(&labels, cfg.labels()),
        o_true: labels,
    }
}
