//! Central finite-difference check of the full batch-loss gradient.

use serde::{Deserialize, Serialize};

use super::batch_gradients;
use crate::data::{segment_from_steps, Sample};
use crate::error::Result;
use crate::loss::{batch_loss, ClassWeights, LossParams, Target};
use crate::lstm::InitRule;
use crate::model::{predict, MpnDims, MpnModel};
use crate::tensor::{Matrix, Rng};

/// Denominator floor of the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares the analytic gradient of the batch loss over `samples` with
/// central differences of step `fd_step` on every parameter coordinate.
pub fn grad_check(
    model: &MpnModel,
    samples: &[Sample],
    params: LossParams,
    weights: &ClassWeights,
    fd_step: f64,
) -> Result<GradCheckReport> {
    let batch: Vec<&Sample> = samples.iter().collect();
    let targets: Vec<Target<'_>> = samples.iter().map(Sample::target).collect();
    let (_, grads) = batch_gradients(model, &batch, params, weights)?;
    let analytic = grads.to_flat();

    let base = model.to_flat();
    let mut probe = model.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.set_flat(flat)?;
        let preds = samples
            .iter()
            .map(|s| predict(&probe, &s.z, &s.c))
            .collect::<Result<Vec<_>>>()?;
        Ok(batch_loss(params, &probe, &preds, &targets, weights)?.total)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_name: model.coordinate_name(0),
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
        checked: base.len(),
    };
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + fd_step;
        let up = eval(&x)?;
        x[i] = base[i] - fd_step;
        let down = eval(&x)?;
        x[i] = base[i];
        let numeric = (up - down) / (2.0 * fd_step);
        let err = relative_error(analytic[i], numeric);
        // NaN compares false; record it so it cannot hide.
        if err > report.max_rel_error || err.is_nan() && !report.max_rel_error.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.worst_name = model.coordinate_name(report.worst_index);
    Ok(report)
}

/// A small random model with `n` random samples and random class weights,
/// sized so a full check takes milliseconds.
pub fn tiny_instance(
    dims: MpnDims,
    n: usize,
    seed: u64,
) -> Result<(MpnModel, Vec<Sample>, ClassWeights)> {
    let mut rng = Rng::new(seed);
    let mut model = MpnModel::init(dims, &mut rng, InitRule::Uniform(0.6))?;
    for t in model.tensors_mut() {
        if t.len() == dims.labels {
            t.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let z = Matrix::from_vec(
            dims.history,
            dims.obs_dim,
            (0..dims.history * dims.obs_dim)
                .map(|_| rng.normal())
                .collect(),
        )?;
        let c = Matrix::from_vec(
            dims.total,
            dims.ctx_dim,
            (0..dims.total * dims.ctx_dim)
                .map(|_| rng.normal())
                .collect(),
        )?;
        let o_true: Vec<Vec<u8>> = (0..dims.horizon())
            .map(|_| {
                (0..dims.labels)
                    .map(|_| u8::from(rng.next_f64() < 0.4))
                    .collect()
            })
            .collect();
        samples.push(Sample {
            z,
            c,
            y_true: segment_from_steps(&o_true, dims.labels),
            o_true,
        });
    }
    let weights = ClassWeights {
        p: (0..dims.labels).map(|_| rng.uniform(0.05, 0.95)).collect(),
        w: (0..dims.labels).map(|_| rng.uniform(0.5, 2.5)).collect(),
    };
    Ok((model, samples, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossConfig;

    fn dims() -> MpnDims {
        MpnDims {
            labels: 2,
            obs_dim: 2,
            ctx_dim: 1,
            history: 3,
            total: 5,
        }
    }

    #[test]
    fn all_configurations_pass() {
        for config in LossConfig::ALL {
            let (m, s, w) = tiny_instance(dims(), 2, 11).unwrap();
            let params = LossParams {
                config,
                lambda: 0.3,
                beta: 0.4,
            };
            let r = grad_check(&m, &s, params, &w, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{config:?}: {r:?}");
            assert_eq!(r.checked, m.param_count());
        }
    }

    #[test]
    fn coarse_step_is_detected() {
        let (m, s, w) = tiny_instance(dims(), 2, 4).unwrap();
        let params = LossParams {
            config: LossConfig::Localize,
            lambda: 0.0,
            beta: 0.5,
        };
        let fine = grad_check(&m, &s, params, &w, 1e-5).unwrap();
        let coarse = grad_check(&m, &s, params, &w, 0.5).unwrap();
        assert!(coarse.max_rel_error > fine.max_rel_error);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }
}
