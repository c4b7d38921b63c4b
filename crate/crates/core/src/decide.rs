//! Turning embeddings and stepwise scores into binary label decisions.
//!
//! Every label is decided independently from one scalar: the embedding
//! coordinate `g[ℓ]` for segment labels, or the stepwise score `o_t[ℓ]` for
//! localization. A score exactly on a decision boundary is negative.

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::tensor::{derive_seed, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    ThresholdZero,
    NearestMean,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::Svm,
        ClassifierKind::ThresholdZero,
        ClassifierKind::NearestMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::ThresholdZero => "threshold",
            ClassifierKind::NearestMean => "nearest",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = MpnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ClassifierKind::Svm),
            "threshold" | "threshold_zero" => Ok(ClassifierKind::ThresholdZero),
            "nearest" | "nearest_mean" => Ok(ClassifierKind::NearestMean),
            other => Err(MpnError::InvalidConfig(format!(
                "unknown classifier '{other}'"
            ))),
        }
    }
}

/// Decision rule for one label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LabelRule {
    /// Positive iff `x > at`.
    Threshold { at: f64 },
    /// Positive iff `weight·x + bias > 0`.
    Svm { weight: f64, bias: f64 },
    /// Positive iff `x` is strictly closer to `positive` than to `negative`.
    NearestMean { negative: f64, positive: f64 },
}

impl LabelRule {
    pub fn decide(&self, x: f64) -> u8 {
        let positive = match *self {
            LabelRule::Threshold { at } => x > at,
            LabelRule::Svm { weight, bias } => weight * x + bias > 0.0,
            LabelRule::NearestMean { negative, positive } => {
                (x - positive).abs() < (x - negative).abs()
            }
        };
        u8::from(positive)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelClassifier {
    pub kind: ClassifierKind,
    pub rules: Vec<LabelRule>,
    /// Labels whose training data had a single class (or no spread) and fell
    /// back to a plain threshold.
    pub fallback: Vec<bool>,
}

/// Settings for [`fit_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Threshold used by `ThresholdZero` and by degenerate labels.
    pub threshold: f64,
    pub svm: SvmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            threshold: 0.0,
            svm: SvmOptions::default(),
        }
    }
}

/// Soft-margin hinge SVM on one feature, trained by stochastic subgradient
/// descent on `(reg/2)·w² + mean_i a_i·max(0, 1 - y_i(w·x_i + b))` over the
/// standardised feature, where `a_i` is 1, or `n / (2 n_class)` when
/// balanced. Step size `1/(reg·t + 1)`; the returned weights are
/// the average of the iterates over the second half of the run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmOptions {
    pub iterations: usize,
    pub reg: f64,
    pub seed: u64,
    /// Weight each class's hinge terms by `n / (2 n_class)`.
    pub balanced: bool,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            iterations: 10_000,
            reg: 1e-2,
            seed: 0,
            balanced: true,
        }
    }
}

/// Fits a 1-D SVM on `(x, label)` pairs. Returns `None` if the data has a
/// single class or no spread.
pub fn fit_svm_1d(xs: &[f64], labels: &[u8], opts: &SvmOptions) -> Option<LabelRule> {
    let n = xs.len();
    let pos = labels.iter().filter(|&&v| v != 0).count();
    if n == 0 || pos == 0 || pos == n {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if !sd.is_finite() || sd <= 0.0 {
        return None;
    }

    let (wp, wn) = if opts.balanced {
        (
            n as f64 / (2 * pos) as f64,
            n as f64 / (2 * (n - pos)) as f64,
        )
    } else {
        (1.0, 1.0)
    };
    let mut rng = Rng::new(opts.seed);
    let (mut w, mut b) = (0.0f64, 0.0f64);
    let (mut w_sum, mut b_sum, mut averaged) = (0.0, 0.0, 0usize);
    let half = opts.iterations / 2;
    for t in 0..opts.iterations {
        let i = rng.below(n);
        let x = (xs[i] - mean) / sd;
        let (y, cw) = if labels[i] != 0 {
            (1.0, wp)
        } else {
            (-1.0, wn)
        };
        let eta = 1.0 / (opts.reg * t as f64 + 1.0);
        let active = y * (w * x + b) < 1.0;
        w -= eta * opts.reg * w;
        if active {
            w += eta * cw * y * x;
            b += eta * cw * y;
        }
        if t >= half {
            w_sum += w;
            b_sum += b;
            averaged += 1;
        }
    }
    let (w, b) = if averaged > 0 {
        (w_sum / averaged as f64, b_sum / averaged as f64)
    } else {
        (w, b)
    };
    // Back to raw units: w·(x - mean)/sd + b.
    Some(LabelRule::Svm {
        weight: w / sd,
        bias: b - w * mean / sd,
    })
}

/// Fits a classifier on `features` (N×L, one scalar feature per label).
pub fn fit_with(
    kind: ClassifierKind,
    features: &[Vec<f64>],
    labels: &[Vec<u8>],
    opts: &FitOptions,
) -> Result<LabelClassifier> {
    if features.is_empty() {
        return Err(MpnError::Empty(
            "classifier fit needs at least one sample".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(MpnError::shape(
            "classifier fit rows",
            features.len(),
            labels.len(),
        ));
    }
    let l = features[0].len();
    for (i, (f, y)) in features.iter().zip(labels).enumerate() {
        if f.len() != l || y.len() != l {
            return Err(MpnError::shape(
                format!("classifier fit row {i}"),
                l,
                format!("features {}, labels {}", f.len(), y.len()),
            ));
        }
    }

    let threshold = LabelRule::Threshold { at: opts.threshold };
    let mut rules = Vec::with_capacity(l);
    let mut fallback = Vec::with_capacity(l);
    for j in 0..l {
        let xs: Vec<f64> = features.iter().map(|f| f[j]).collect();
        let ys: Vec<u8> = labels.iter().map(|y| y[j]).collect();
        let rule = match kind {
            ClassifierKind::ThresholdZero => Some(threshold),
            ClassifierKind::Svm => {
                let svm = SvmOptions {
                    seed: derive_seed(opts.svm.seed, j as u64),
                    ..opts.svm
                };
                fit_svm_1d(&xs, &ys, &svm)
            }
            ClassifierKind::NearestMean => nearest_mean_rule(&xs, &ys),
        };
        fallback.push(rule.is_none());
        rules.push(rule.unwrap_or(threshold));
    }
    Ok(LabelClassifier {
        kind,
        rules,
        fallback,
    })
}

/// [`fit_with`] using a zero threshold and default SVM settings.
pub fn fit(
    kind: ClassifierKind,
    embeddings: &[Vec<f64>],
    labels: &[Vec<u8>],
) -> Result<LabelClassifier> {
    fit_with(kind, embeddings, labels, &FitOptions::default())
}

fn nearest_mean_rule(xs: &[f64], ys: &[u8]) -> Option<LabelRule> {
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (&x, &y) in xs.iter().zip(ys) {
        if y != 0 {
            sp += x;
            np += 1;
        } else {
            sn += x;
            nn += 1;
        }
    }
    if np == 0 || nn == 0 {
        return None;
    }
    Some(LabelRule::NearestMean {
        negative: sn / nn as f64,
        positive: sp / np as f64,
    })
}

impl LabelClassifier {
    pub fn threshold(labels: usize, at: f64) -> Self {
        LabelClassifier {
            kind: ClassifierKind::ThresholdZero,
            rules: vec![LabelRule::Threshold { at }; labels],
            fallback: vec![false; labels],
        }
    }

    pub fn labels(&self) -> usize {
        self.rules.len()
    }

    pub fn classify(&self, x: &[f64]) -> Vec<u8> {
        debug_assert_eq!(x.len(), self.rules.len());
        self.rules
            .iter()
            .zip(x)
            .map(|(r, &v)| r.decide(v))
            .collect()
    }

    /// Applies the classifier to every row of a stepwise score matrix.
    pub fn localize(&self, o: &Matrix) -> Vec<Vec<u8>> {
        (0..o.rows()).map(|k| self.classify(o.row(k))).collect()
    }
}

/// Per-step decisions from stepwise scores.
pub fn localize(clf_step: &LabelClassifier, o: &Matrix) -> Vec<Vec<u8>> {
    clf_step.localize(o)
}

/// Stepwise decisions restricted to labels the segment decision marks as
/// present.
pub fn localize_gated(clf_step: &LabelClassifier, o: &Matrix, segment: &[u8]) -> Vec<Vec<u8>> {
    clf_step
        .localize(o)
        .into_iter()
        .map(|row| row.iter().zip(segment).map(|(a, b)| a & b).collect())
        .collect()
}

/// The segment decision repeated on every forecast step.
pub fn broadcast_baseline(segment: &[u8], horizon: usize) -> Vec<Vec<u8>> {
    vec![segment.to_vec(); horizon]
}

/// Pools per-step `(score, label)` pairs over samples so that a step
/// classifier can be fitted with [`fit_with`].
pub fn pool_steps(scores: &[&Matrix], steps: &[&[Vec<u8>]]) -> (Vec<Vec<f64>>, Vec<Vec<u8>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (o, truth) in scores.iter().zip(steps) {
        for (k, row) in truth.iter().enumerate() {
            xs.push(o.row(k).to_vec());
            ys.push(row.clone());
        }
    }
    (xs, ys)
}
