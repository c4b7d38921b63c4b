//! Fitting decision rules on a trained model and scoring it.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::decide::{
    broadcast_baseline, fit_with, localize_gated, pool_steps, ClassifierKind, FitOptions,
    LabelClassifier, SvmOptions,
};
use crate::error::{MpnError, Result};
use crate::metrics::{evaluate, localization_metrics, PrfReport};
use crate::model::Prediction;

/// Threshold for step labels whose training scores are single-class.
pub const STEP_FALLBACK_THRESHOLD: f64 = 0.5;

/// Segment classifiers of every kind plus the step classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifiers {
    pub segment: Vec<LabelClassifier>,
    pub step: LabelClassifier,
}

impl Classifiers {
    pub fn segment(&self, kind: ClassifierKind) -> Option<&LabelClassifier> {
        self.segment.iter().find(|c| c.kind == kind)
    }
}

fn svm_options(seed: u64) -> SvmOptions {
    SvmOptions {
        seed,
        ..SvmOptions::default()
    }
}

/// Fits a segment classifier on the embeddings of `samples`.
pub fn fit_segment(
    kind: ClassifierKind,
    preds: &[Prediction],
    samples: &[Sample],
    seed: u64,
) -> Result<LabelClassifier> {
    let xs: Vec<Vec<f64>> = preds.iter().map(|p| p.g.clone()).collect();
    let ys: Vec<Vec<u8>> = samples.iter().map(|s| s.y_true.clone()).collect();
    let opts = FitOptions {
        threshold: 0.0,
        svm: svm_options(seed),
    };
    fit_with(kind, &xs, &ys, &opts)
}

/// Fits the step SVM on stepwise scores `o_t[ℓ]` pooled over steps.
pub fn fit_step(preds: &[Prediction], samples: &[Sample], seed: u64) -> Result<LabelClassifier> {
    let scores: Vec<_> = preds.iter().map(|p| &p.o).collect();
    let steps: Vec<&[Vec<u8>]> = samples.iter().map(|s| s.o_true.as_slice()).collect();
    let (xs, ys) = pool_steps(&scores, &steps);
    let opts = FitOptions {
        threshold: STEP_FALLBACK_THRESHOLD,
        svm: svm_options(seed),
    };
    fit_with(ClassifierKind::Svm, &xs, &ys, &opts)
}

pub fn fit_classifiers(
    train_preds: &[Prediction],
    train: &[Sample],
    seed: u64,
) -> Result<Classifiers> {
    let segment = ClassifierKind::ALL
        .iter()
        .map(|&k| fit_segment(k, train_preds, train, seed))
        .collect::<Result<_>>()?;
    Ok(Classifiers {
        segment,
        step: fit_step(train_preds, train, seed)?,
    })
}

pub fn segment_decisions(clf: &LabelClassifier, preds: &[Prediction]) -> Vec<Vec<u8>> {
    preds.iter().map(|p| clf.classify(&p.g)).collect()
}

pub fn segment_report(
    clf: &LabelClassifier,
    preds: &[Prediction],
    samples: &[Sample],
) -> Result<PrfReport> {
    if preds.len() != samples.len() {
        return Err(MpnError::shape(
            "segment_report",
            samples.len(),
            preds.len(),
        ));
    }
    let truth: Vec<Vec<u8>> = samples.iter().map(|s| s.y_true.clone()).collect();
    evaluate(&segment_decisions(clf, preds), &truth)
}

/// Per-sample `(T-τ) × L` binary decisions.
pub type StepDecisions = Vec<Vec<Vec<u8>>>;

/// Stepwise decisions: localized ones gated by the segment decision, and
/// the segment decision broadcast over the horizon.
pub fn step_decisions(
    segment: &LabelClassifier,
    step: &LabelClassifier,
    preds: &[Prediction],
) -> (StepDecisions, StepDecisions) {
    preds
        .iter()
        .map(|p| {
            let seg = segment.classify(&p.g);
            (
                localize_gated(step, &p.o, &seg),
                broadcast_baseline(&seg, p.o.rows()),
            )
        })
        .unzip()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub localized: PrfReport,
    pub broadcast: PrfReport,
}

impl LocalizationReport {
    pub fn to_text(&self) -> String {
        format!(
            "[localized]\n{}[broadcast]\n{}",
            self.localized.to_text(),
            self.broadcast.to_text()
        )
    }
}

pub fn localization_report(
    segment: &LabelClassifier,
    step: &LabelClassifier,
    preds: &[Prediction],
    samples: &[Sample],
) -> Result<LocalizationReport> {
    if preds.len() != samples.len() {
        return Err(MpnError::shape(
            "localization_report",
            samples.len(),
            preds.len(),
        ));
    }
    let (localized, broadcast) = step_decisions(segment, step, preds);
    let truth: Vec<Vec<Vec<u8>>> = samples.iter().map(|s| s.o_true.clone()).collect();
    Ok(LocalizationReport {
        localized: localization_metrics(&localized, &truth)?,
        broadcast: localization_metrics(&broadcast, &truth)?,
    })
}
