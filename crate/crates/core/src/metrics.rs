//! Multi-label precision, recall and F1.
//!
//! Macro scores are unweighted means of the per-label scores; micro scores
//! come from counts pooled over all labels and samples. Any ratio whose
//! denominator is zero is defined as 0.

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl CountTable {
    pub fn labels(&self) -> usize {
        self.tp.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl PrfReport {
    pub const KEYS: [&'static str; 6] = [
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "micro_precision",
        "micro_recall",
        "micro_f1",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.micro_precision,
            self.micro_recall,
            self.micro_f1,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        PrfReport {
            macro_precision: v[0],
            macro_recall: v[1],
            macro_f1: v[2],
            micro_precision: v[3],
            micro_recall: v[4],
            micro_f1: v[5],
        }
    }

    /// Model-selection score.
    pub fn f1_sum(&self) -> f64 {
        self.micro_f1 + self.macro_f1
    }

    /// `key: value` lines in [`KEYS`](Self::KEYS) order.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}: {v:.6}\n"))
            .collect()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Per-label confusion counts of binary `pred` against `truth` (both N×L).
pub fn count(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<CountTable> {
    if pred.len() != truth.len() {
        return Err(MpnError::shape("count rows", truth.len(), pred.len()));
    }
    let l = truth.first().map_or(0, Vec::len);
    let mut table = CountTable {
        tp: vec![0; l],
        fp: vec![0; l],
        fn_: vec![0; l],
    };
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != l || t.len() != l {
            return Err(MpnError::shape(
                format!("count row {i}"),
                l,
                format!("pred {}, truth {}", p.len(), t.len()),
            ));
        }
        for j in 0..l {
            match (p[j] != 0, t[j] != 0) {
                (true, true) => table.tp[j] += 1,
                (true, false) => table.fp[j] += 1,
                (false, true) => table.fn_[j] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(table)
}

pub fn prf(counts: &CountTable) -> PrfReport {
    let l = counts.labels();
    if l == 0 {
        return PrfReport::default();
    }
    let (mut mp, mut mr, mut mf) = (0.0, 0.0, 0.0);
    for j in 0..l {
        let (tp, fp, fn_) = (counts.tp[j], counts.fp[j], counts.fn_[j]);
        mp += ratio(tp, tp + fp);
        mr += ratio(tp, tp + fn_);
        mf += f1(tp, fp, fn_);
    }
    let tp: usize = counts.tp.iter().sum();
    let fp: usize = counts.fp.iter().sum();
    let fn_: usize = counts.fn_.iter().sum();
    PrfReport {
        macro_precision: mp / l as f64,
        macro_recall: mr / l as f64,
        macro_f1: mf / l as f64,
        micro_precision: ratio(tp, tp + fp),
        micro_recall: ratio(tp, tp + fn_),
        micro_f1: f1(tp, fp, fn_),
    }
}

pub fn evaluate(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> Result<PrfReport> {
    Ok(prf(&count(pred, truth)?))
}

/// Scores stepwise decisions, treating every (sample, step) pair as one row.
pub fn localization_metrics(
    pred_steps: &[Vec<Vec<u8>>],
    truth_steps: &[Vec<Vec<u8>>],
) -> Result<PrfReport> {
    if pred_steps.len() != truth_steps.len() {
        return Err(MpnError::shape(
            "localization samples",
            truth_steps.len(),
            pred_steps.len(),
        ));
    }
    let mut pred_rows = Vec::new();
    let mut truth_rows = Vec::new();
    for (i, (p, t)) in pred_steps.iter().zip(truth_steps).enumerate() {
        if p.len() != t.len() {
            return Err(MpnError::shape(
                format!("localization steps of sample {i}"),
                t.len(),
                p.len(),
            ));
        }
        pred_rows.extend(p.iter().cloned());
        truth_rows.extend(t.iter().cloned());
    }
    evaluate(&pred_rows, &truth_rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_case() -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
        (
            vec![vec![1, 0], vec![1, 1], vec![0, 0]],
            vec![vec![1, 0], vec![0, 1], vec![0, 1]],
        )
    }

    #[test]
    fn count_fixtures() {
        let (p, t) = hand_case();
        let c = count(&p, &t).unwrap();
        assert_eq!(c.tp, vec![1, 1]);
        assert_eq!(c.fp, vec![1, 0]);
        assert_eq!(c.fn_, vec![0, 1]);

        let c = count(&t, &t).unwrap();
        assert!(c.fp.iter().chain(&c.fn_).all(|&v| v == 0));

        let ones = vec![vec![1u8; 3]; 4];
        let zeros = vec![vec![0u8; 3]; 4];
        let c = count(&ones, &zeros).unwrap();
        assert_eq!(c.fp, vec![4; 3]);
        assert_eq!(c.tp, vec![0; 3]);
        assert_eq!(c.fn_, vec![0; 3]);

        assert!(count(&ones[..2], &zeros).is_err());
    }

    #[test]
    fn prf_hand_case() {
        let (p, t) = hand_case();
        let r = evaluate(&p, &t).unwrap();
        let two_thirds = 2.0 / 3.0;
        assert!((r.micro_precision - two_thirds).abs() < 1e-15);
        assert!((r.micro_recall - two_thirds).abs() < 1e-15);
        assert!((r.micro_f1 - two_thirds).abs() < 1e-15);
        assert!((r.macro_precision - 0.75).abs() < 1e-15);
        assert!((r.macro_recall - 0.75).abs() < 1e-15);
        assert!((r.macro_f1 - two_thirds).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        let (_, t) = hand_case();
        assert_eq!(evaluate(&t, &t).unwrap().values(), [1.0; 6]);
        let zeros = vec![vec![0u8; 2]; 3];
        assert_eq!(evaluate(&zeros, &zeros).unwrap().values(), [0.0; 6]);
    }

    #[test]
    fn broadcast_over_half_window() {
        // True label on 2 of 4 steps, predicted on all 4.
        let pred = vec![vec![vec![1u8]; 4]];
        let truth = vec![vec![vec![1u8], vec![1], vec![0], vec![0]]];
        let r = localization_metrics(&pred, &truth).unwrap();
        assert_eq!(r.micro_recall, 1.0);
        assert_eq!(r.micro_precision, 0.5);
        let perfect = localization_metrics(&truth, &truth).unwrap();
        assert_eq!(perfect.values(), [1.0; 6]);
    }

    #[test]
    fn report_text_has_six_keys() {
        let text = PrfReport::default().to_text();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("macro_precision: 0.000000"));
    }
}
