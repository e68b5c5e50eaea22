//! Confusion matrices and per-class precision/recall.

use std::io::Write;

use thiserror::Error;

use crate::nn::{argmax, LabeledSamples, NnError, Real, Tensor};
use crate::nn::Network;

/// Samples per inference batch in [`evaluate`].
const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Parameter(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, EvalError> {
        let mut m = Self::new(classes);
        for (truth, predicted) in pairs {
            m.record(truth, predicted)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(EvalError::Parameter(format!(
                "class pair ({truth}, {predicted}) outside {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// True-class sample count per class.
    pub support: Vec<u64>,
    /// Classes that were never predicted; their precision is reported as 0.
    pub undefined_precision: Vec<bool>,
}

impl Metrics {
    pub fn from_confusion(m: &ConfusionMatrix) -> Result<Self, EvalError> {
        let total = m.total();
        if total == 0 {
            return Err(EvalError::Parameter("empty confusion matrix".into()));
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let n = m.classes();
        let support: Vec<u64> = (0..n).map(|c| m.row_sum(c)).collect();
        let undefined_precision: Vec<bool> = (0..n).map(|c| m.col_sum(c) == 0).collect();
        for (c, _) in undefined_precision.iter().enumerate().filter(|(_, u)| **u) {
            log::warn!("class {c} was never predicted; precision reported as 0");
        }
        Ok(Self {
            accuracy: m.trace() as f64 / total as f64,
            precision: (0..n).map(|c| ratio(m.get(c, c), m.col_sum(c))).collect(),
            recall: (0..n).map(|c| ratio(m.get(c, c), support[c])).collect(),
            support,
            undefined_precision,
        })
    }

    /// `Σ_c M_cc / Σ_c row_c`.
    pub fn micro_recall(&self) -> f64 {
        let hits: f64 = self.recall.iter().zip(&self.support).map(|(r, &s)| r * s as f64).sum();
        hits / self.support.iter().sum::<u64>() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub predictions: Vec<usize>,
}

/// Classifies every sample in inference mode.
pub fn evaluate<F: Real>(model: &Network<F>, samples: &LabeledSamples<F>) -> Result<Evaluation, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Parameter("cannot evaluate an empty split".into()));
    }
    let classes = model.num_outputs();
    let mut predictions = Vec::with_capacity(samples.len());
    let indices: Vec<usize> = (0..samples.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _): (Tensor<F>, _) = samples.batch(chunk)?;
        let out = model.logits(&x)?;
        for row in out.data().chunks_exact(classes) {
            predictions.push(argmax(row));
        }
    }
    let confusion = ConfusionMatrix::from_pairs(classes, samples.labels.iter().copied().zip(predictions.iter().copied()))?;
    let metrics = Metrics::from_confusion(&confusion)?;
    Ok(Evaluation {
        confusion,
        metrics,
        predictions,
    })
}

/// Row-stochastic copy; empty rows stay zero.
pub fn normalize_confusion(m: &ConfusionMatrix) -> Vec<f64> {
    let n = m.classes();
    let mut out = vec![0.0; n * n];
    for t in 0..n {
        let sum = m.row_sum(t);
        if sum > 0 {
            for p in 0..n {
                out[t * n + p] = m.get(t, p) as f64 / sum as f64;
            }
        }
    }
    out
}

fn check_names(m: &ConfusionMatrix, names: &[String]) -> Result<(), EvalError> {
    if names.len() != m.classes() {
        return Err(EvalError::Parameter(format!(
            "{} class names for {} classes",
            names.len(),
            m.classes()
        )));
    }
    Ok(())
}

/// Header `class,<names…>`, one row per true class.
pub fn write_confusion_csv<W: Write>(w: W, m: &ConfusionMatrix, names: &[String]) -> Result<(), EvalError> {
    check_names(m, names)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(std::iter::once("class").chain(names.iter().map(String::as_str)))?;
    for (t, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..m.classes()).map(|p| m.get(t, p).to_string()));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_normalized_csv<W: Write>(w: W, m: &ConfusionMatrix, names: &[String]) -> Result<(), EvalError> {
    check_names(m, names)?;
    let norm = normalize_confusion(m);
    let n = m.classes();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(std::iter::once("class").chain(names.iter().map(String::as_str)))?;
    for (t, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(norm[t * n..(t + 1) * n].iter().map(|v| format!("{v:.6}")));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns `class,precision,recall,support`, plus an `accuracy` row.
pub fn write_metrics_csv<W: Write>(w: W, metrics: &Metrics, names: &[String]) -> Result<(), EvalError> {
    if names.len() != metrics.precision.len() {
        return Err(EvalError::Parameter("class names do not match metrics".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "precision", "recall", "support"])?;
    for (c, name) in names.iter().enumerate() {
        out.write_record([
            name.clone(),
            format!("{:.6}", metrics.precision[c]),
            format!("{:.6}", metrics.recall[c]),
            metrics.support[c].to_string(),
        ])?;
    }
    let total: u64 = metrics.support.iter().sum();
    out.write_record(["accuracy".into(), format!("{:.6}", metrics.accuracy), format!("{:.6}", metrics.accuracy), total.to_string()])?;
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let m = ConfusionMatrix::from_pairs(10, (0..10).flat_map(|c| [(c, c); 3])).unwrap();
        let metrics = Metrics::from_confusion(&m).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert!(metrics.precision.iter().chain(&metrics.recall).all(|&v| v == 1.0));
        assert!(metrics.undefined_precision.iter().all(|u| !u));
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let m = ConfusionMatrix::from_pairs(10, (0..10).flat_map(|c| [(c, 0); 5])).unwrap();
        let metrics = Metrics::from_confusion(&m).unwrap();
        assert_eq!(metrics.accuracy, 0.1);
        assert_eq!(metrics.recall[0], 1.0);
        assert_eq!(metrics.precision[0], 0.1);
        assert_eq!(metrics.precision[3], 0.0);
        assert!(metrics.undefined_precision[3]);
        assert!(!metrics.undefined_precision[0]);
    }

    #[test]
    fn normalization_rows() {
        let mut m = ConfusionMatrix::new(10);
        for (p, k) in [(0, 8), (1, 1), (2, 1)] {
            for _ in 0..k {
                m.record(0, p).unwrap();
            }
        }
        let norm = normalize_confusion(&m);
        assert_eq!(&norm[..4], &[0.8, 0.1, 0.1, 0.0]);
        assert!(norm[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(ConfusionMatrix::new(3).record(3, 0).is_err());
        assert!(Metrics::from_confusion(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn csv_layout() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let m = ConfusionMatrix::from_pairs(2, [(0, 0), (0, 1), (1, 1)]).unwrap();
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &m, &names).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "class,a,b\na,1,1\nb,0,1\n");
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &m, &names).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "class,a,b\na,0.500000,0.500000\nb,0.000000,1.000000\n");
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &Metrics::from_confusion(&m).unwrap(), &names).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("class,precision,recall,support\na,1.000000,0.500000,2\nb,0.500000,1.000000,1\n"));
        assert!(write_confusion_csv(Vec::new(), &m, &names[..1]).is_err());
    }
}
