use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VgaError};

/// How per-class F1 scores are combined into the reported one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    /// Unweighted mean over both classes.
    #[default]
    Macro,
    /// Scores of the false-rumor class only.
    Binary,
}

impl FromStr for F1Average {
    type Err = VgaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(F1Average::Macro),
            "binary" => Ok(F1Average::Binary),
            _ => Err(VgaError::config(format!(
                "unknown F1 averaging '{s}' (macro, binary)"
            ))),
        }
    }
}

/// Confusion counts with class 1 as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 of one class; zero denominators give 0.
fn class_scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

pub fn compute_metrics(predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
    compute_metrics_with(predictions, labels, F1Average::Macro)
}

pub fn compute_metrics_with(
    predictions: &[u8],
    labels: &[u8],
    average: F1Average,
) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(VgaError::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(VgaError::EmptyInput("no predictions to score".into()));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        if p > 1 || y > 1 {
            return Err(VgaError::Contract(format!(
                "labels must be 0 or 1, got prediction {p}, label {y}"
            )));
        }
        match (p, y) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    let pos = class_scores(c.tp, c.fp, c.fn_);
    let neg = class_scores(c.tn, c.fn_, c.fp);
    let (precision, recall, f1) = match average {
        F1Average::Binary => pos,
        F1Average::Macro => (
            (pos.0 + neg.0) / 2.0,
            (pos.1 + neg.1) / 2.0,
            (pos.2 + neg.2) / 2.0,
        ),
    };
    Ok(Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
        confusion: c,
    })
}

/// Field-wise arithmetic mean; confusion counts are summed.
pub fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len().max(1) as f64;
    let mut out = Metrics::default();
    for m in all {
        out.accuracy += m.accuracy / n;
        out.precision += m.precision / n;
        out.recall += m.recall / n;
        out.f1 += m.f1 / n;
        out.confusion.tp += m.confusion.tp;
        out.confusion.tn += m.confusion.tn;
        out.confusion.fp += m.confusion.fp;
        out.confusion.fn_ += m.confusion.fn_;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_confusion_matrix() {
        let m = compute_metrics(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(
            m.confusion,
            Confusion {
                tp: 1,
                tn: 2,
                fp: 1,
                fn_: 0
            }
        );
        assert!((m.f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        let b = compute_metrics_with(&[1, 1, 0, 0], &[1, 0, 0, 0], F1Average::Binary).unwrap();
        assert_eq!((b.precision, b.recall), (0.5, 1.0));
        assert!((b.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let m = compute_metrics(&[1, 1, 1], &[0, 0, 0]).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.f1, 0.0);
        let perfect = compute_metrics(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!((perfect.accuracy, perfect.f1), (1.0, 1.0));
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[2], &[1]).is_err());
    }

    #[test]
    fn mean_is_arithmetic() {
        let a = compute_metrics(&[1, 0], &[1, 0]).unwrap();
        let b = compute_metrics(&[1, 0], &[0, 1]).unwrap();
        let m = mean_metrics(&[a, b]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion.total(), 4);
    }

    proptest! {
        #[test]
        fn values_are_bounded(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            for avg in [F1Average::Macro, F1Average::Binary] {
                let m = compute_metrics_with(&p, &y, avg).unwrap();
                for v in [m.accuracy, m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                let c = m.confusion;
                prop_assert_eq!(m.accuracy, (c.tp + c.tn) as f64 / p.len() as f64);
            }
        }
    }
}
