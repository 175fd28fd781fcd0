//! Calibration error, classification scores and the entropy-thresholded
//! confusion battery. All rates are fractions in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{argmax, LabelVector, ProbMatrix};
use crate::error::{domain, shape, Result};

pub const DEFAULT_BINS: usize = 15;

/// One equal-width confidence bin `[lo, hi)`; the last bin is closed at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence, `None` when empty.
    pub confidence: Option<f64>,
    /// Fraction correct, `None` when empty.
    pub accuracy: Option<f64>,
}

impl Bin {
    /// `|acc - conf|`, `None` when empty.
    pub fn gap(&self) -> Option<f64> {
        Some((self.accuracy? - self.confidence?).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    bins: Vec<Bin>,
    total: usize,
}

impl ReliabilityBins {
    /// Bins top-1 confidence against argmax correctness (ties low).
    pub fn from_probs(probs: &ProbMatrix, labels: &LabelVector, m: usize) -> Result<Self> {
        check_labels(probs, labels)?;
        let conf = probs.confidences();
        let correct: Vec<bool> = probs
            .rows()
            .zip(labels.as_slice())
            .map(|(row, &y)| argmax(row) == y)
            .collect();
        Self::from_confidences(&conf, &correct, m)
    }

    /// Bin index of a confidence is `floor(conf * m)` clamped to `m - 1`.
    pub fn from_confidences(confidences: &[f64], correct: &[bool], m: usize) -> Result<Self> {
        if m == 0 {
            return Err(domain!("bin count must be at least 1"));
        }
        if confidences.len() != correct.len() {
            return Err(shape!(
                "{} confidences for {} correctness values",
                confidences.len(),
                correct.len()
            ));
        }
        let mut count = vec![0usize; m];
        let mut conf_sum = vec![0.0f64; m];
        let mut hits = vec![0usize; m];
        for (i, (&c, &ok)) in confidences.iter().zip(correct).enumerate() {
            if !(0.0..=1.0 + 1e-9).contains(&c) {
                return Err(domain!("confidence {c} at row {i} lies outside [0, 1]"));
            }
            let b = (libm::floor(c * m as f64) as usize).min(m - 1);
            count[b] += 1;
            conf_sum[b] += c;
            hits[b] += usize::from(ok);
        }
        let bins = (0..m)
            .map(|b| {
                let n = count[b];
                Bin {
                    lo: b as f64 / m as f64,
                    hi: (b + 1) as f64 / m as f64,
                    count: n,
                    confidence: (n > 0).then(|| conf_sum[b] / n as f64),
                    accuracy: (n > 0).then(|| hits[b] as f64 / n as f64),
                }
            })
            .collect();
        Ok(Self {
            bins,
            total: confidences.len(),
        })
    }

    /// Wraps precomputed bins; the sample total is the sum of their counts.
    pub fn from_bins(bins: Vec<Bin>) -> Self {
        let total = bins.iter().map(|b| b.count).sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Count-weighted mean gap.
    pub fn ece(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(domain!("expected calibration error of zero samples"));
        }
        let weighted: f64 = self
            .bins
            .iter()
            .filter_map(|b| b.gap().map(|g| g * b.count as f64))
            .sum();
        Ok(weighted / self.total as f64)
    }

    /// Largest gap over non-empty bins.
    pub fn mce(&self) -> Result<f64> {
        self.bins
            .iter()
            .filter_map(Bin::gap)
            .reduce(f64::max)
            .ok_or_else(|| domain!("maximum calibration error with every bin empty"))
    }
}

fn check_labels(probs: &ProbMatrix, labels: &LabelVector) -> Result<()> {
    if probs.samples() != labels.len() {
        return Err(shape!(
            "{} probability rows for {} labels",
            probs.samples(),
            labels.len()
        ));
    }
    if probs.classes() != labels.classes() {
        return Err(shape!(
            "probabilities have {} classes, labels index {}",
            probs.classes(),
            labels.classes()
        ));
    }
    Ok(())
}

pub fn ece(probs: &ProbMatrix, labels: &LabelVector, m: usize) -> Result<f64> {
    ReliabilityBins::from_probs(probs, labels, m)?.ece()
}

pub fn mce(probs: &ProbMatrix, labels: &LabelVector, m: usize) -> Result<f64> {
    ReliabilityBins::from_probs(probs, labels, m)?.mce()
}

/// Mean over samples of the squared distance to the one-hot label.
pub fn brier(probs: &ProbMatrix, labels: &LabelVector) -> Result<f64> {
    check_labels(probs, labels)?;
    if probs.samples() == 0 {
        return Err(domain!("Brier score of zero samples"));
    }
    let total: f64 = probs
        .rows()
        .zip(labels.as_slice())
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(c, &p)| {
                    let d = p - if c == y { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / probs.samples() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1 of argmax predictions. A class that is neither
/// predicted nor present contributes F1 = 0 to the mean.
pub fn classification_scores(probs: &ProbMatrix, labels: &LabelVector) -> Result<ClassificationScores> {
    check_labels(probs, labels)?;
    label_scores(&probs.predicted_labels(), labels)
}

/// [`classification_scores`] on precomputed predictions.
pub fn label_scores(predicted: &[usize], labels: &LabelVector) -> Result<ClassificationScores> {
    if predicted.len() != labels.len() {
        return Err(shape!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        ));
    }
    if predicted.is_empty() {
        return Err(domain!("classification scores of zero samples"));
    }
    let c = labels.classes();
    let mut tp = vec![0usize; c];
    let mut pred_count = vec![0usize; c];
    let mut true_count = vec![0usize; c];
    for (&p, &y) in predicted.iter().zip(labels.as_slice()) {
        if p >= c {
            return Err(domain!("predicted label {p} out of range for {c} classes"));
        }
        pred_count[p] += 1;
        true_count[y] += 1;
        if p == y {
            tp[y] += 1;
        }
    }
    let hits: usize = tp.iter().sum();
    let f1_sum: f64 = (0..c)
        .map(|k| {
            let denom = pred_count[k] + true_count[k];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .sum();
    Ok(ClassificationScores {
        accuracy: hits as f64 / predicted.len() as f64,
        macro_f1: f1_sum / c as f64,
    })
}

/// `predicted[i] == labels[i]` per sample.
pub fn correctness(predicted: &[usize], labels: &[usize]) -> Vec<bool> {
    predicted.iter().zip(labels).map(|(p, y)| p == y).collect()
}

/// Correct/incorrect crossed with certain/uncertain at threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UncertaintyConfusion {
    /// Correct and certain.
    pub tc: usize,
    /// Incorrect and uncertain.
    pub tu: usize,
    /// Incorrect and certain.
    pub fc: usize,
    /// Correct and uncertain.
    pub fu: usize,
}

impl UncertaintyConfusion {
    pub fn total(&self) -> usize {
        self.tc + self.tu + self.fc + self.fu
    }

    pub fn scores(&self) -> UncertaintyScores {
        uncertainty_scores(self)
    }
}

/// A sample is certain iff its entropy is strictly below `tau`.
pub fn uncertainty_confusion(correct: &[bool], entropies: &[f64], tau: f64) -> Result<UncertaintyConfusion> {
    if correct.len() != entropies.len() {
        return Err(shape!(
            "{} correctness values for {} entropies",
            correct.len(),
            entropies.len()
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(domain!("entropy threshold {tau} lies outside [0, 1]"));
    }
    let mut out = UncertaintyConfusion {
        tc: 0,
        tu: 0,
        fc: 0,
        fu: 0,
    };
    for (&ok, &h) in correct.iter().zip(entropies) {
        match (ok, h < tau) {
            (true, true) => out.tc += 1,
            (true, false) => out.fu += 1,
            (false, true) => out.fc += 1,
            (false, false) => out.tu += 1,
        }
    }
    Ok(out)
}

/// Rates derived from an [`UncertaintyConfusion`]; `None` marks a zero
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyScores {
    pub uacc: Option<f64>,
    pub utpr: Option<f64>,
    pub ufpr: Option<f64>,
    pub ug_mean: Option<f64>,
}

pub fn uncertainty_scores(m: &UncertaintyConfusion) -> UncertaintyScores {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let uacc = ratio(m.tu + m.tc, m.total());
    let utpr = ratio(m.tc, m.tc + m.fu);
    let ufpr = ratio(m.fc, m.fc + m.tu);
    let ug_mean = match (utpr, ufpr) {
        (Some(t), Some(f)) => Some(libm::sqrt(t * (1.0 - f))),
        _ => None,
    };
    UncertaintyScores {
        uacc,
        utpr,
        ufpr,
        ug_mean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub confusion: UncertaintyConfusion,
    pub scores: UncertaintyScores,
}

/// One row per threshold; `taus` must be ascending.
pub fn threshold_sweep(correct: &[bool], entropies: &[f64], taus: &[f64]) -> Result<Vec<SweepRow>> {
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(domain!("thresholds must be sorted ascending, got {taus:?}"));
    }
    taus.iter()
        .map(|&tau| {
            let confusion = uncertainty_confusion(correct, entropies, tau)?;
            Ok(SweepRow {
                tau,
                confusion,
                scores: confusion.scores(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn bins_examples() {
        let b = ReliabilityBins::from_confidences(&[0.91, 0.99], &[true, false], 10).unwrap();
        let occupied: Vec<&Bin> = b.bins().iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert!(close(occupied[0].confidence.unwrap(), 0.95));
        assert_eq!(occupied[0].accuracy, Some(0.5));

        let b = ReliabilityBins::from_confidences(&[1.0, 1.0], &[true, true], 15).unwrap();
        assert_eq!(b.bins()[14].count, 2);
        assert_eq!(b.bins()[14].hi, 1.0);
        assert_eq!(b.ece().unwrap(), 0.0);

        let b = ReliabilityBins::from_confidences(&[0.3, 0.9], &[true, false], 1).unwrap();
        assert!(close(b.bins()[0].confidence.unwrap(), 0.6));
        assert_eq!(b.bins()[0].accuracy, Some(0.5));
    }

    #[test]
    fn ece_examples() {
        let b = ReliabilityBins::from_confidences(&[0.9, 0.9], &[true, false], 1).unwrap();
        assert!(close(b.ece().unwrap(), 0.4));

        let bin = |count, accuracy, confidence| Bin {
            lo: 0.0,
            hi: 1.0,
            count,
            confidence: Some(confidence),
            accuracy: Some(accuracy),
        };
        let b = ReliabilityBins::from_bins(alloc::vec![bin(3, 0.9, 0.8), bin(1, 1.0, 0.95)]);
        assert!(close(b.ece().unwrap(), 0.0875));
        assert!(close(b.mce().unwrap(), 0.1));

        let empty = ReliabilityBins::from_confidences(&[], &[], 15).unwrap();
        assert!(empty.ece().is_err());
        assert!(empty.mce().is_err());
    }

    #[test]
    fn brier_examples() {
        let y0 = LabelVector::new(alloc::vec![0], 2).unwrap();
        let y1 = LabelVector::new(alloc::vec![1], 2).unwrap();
        let one_hot = ProbMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(brier(&one_hot, &y0).unwrap(), 0.0);
        let uniform = ProbMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(brier(&uniform, &y1).unwrap(), 0.5);
        let p = ProbMatrix::from_rows(&[[0.8, 0.2]]).unwrap();
        assert!(close(brier(&p, &y0).unwrap(), 0.08));
    }

    #[test]
    fn classification_examples() {
        let probs = ProbMatrix::from_rows(&[[0.9, 0.1], [0.6, 0.4], [0.7, 0.3], [0.8, 0.2]]).unwrap();
        let labels = LabelVector::new(alloc::vec![0, 0, 1, 1], 2).unwrap();
        let s = classification_scores(&probs, &labels).unwrap();
        assert_eq!(s.accuracy, 0.5);
        assert!(close(s.macro_f1, 1.0 / 3.0));

        let labels = LabelVector::new(alloc::vec![0, 0, 0, 0], 2).unwrap();
        let s = classification_scores(&probs, &labels).unwrap();
        assert_eq!((s.accuracy, s.macro_f1), (1.0, 0.5));

        // C = 3 with class 2 unused: F1 of class 2 counts as 0.
        let labels = LabelVector::new(alloc::vec![0, 1], 3).unwrap();
        let s = label_scores(&[0, 1], &labels).unwrap();
        assert_eq!(s.accuracy, 1.0);
        assert!(close(s.macro_f1, 2.0 / 3.0));
    }

    #[test]
    fn confusion_examples() {
        let ok = [true, true, false, false];
        let h = [0.1, 0.7, 0.1, 0.9];
        let m = uncertainty_confusion(&ok, &h, 0.5).unwrap();
        assert_eq!((m.tc, m.fu, m.fc, m.tu), (1, 1, 1, 1));
        let s = m.scores();
        assert_eq!((s.uacc, s.utpr, s.ufpr, s.ug_mean), (Some(0.5), Some(0.5), Some(0.5), Some(0.5)));

        let m = uncertainty_confusion(&ok, &h, 0.0).unwrap();
        assert_eq!((m.tc, m.fc), (0, 0));

        let m = uncertainty_confusion(&[true; 3], &[0.0; 3], 0.5).unwrap();
        assert_eq!(m.tc, 3);
        let s = m.scores();
        assert_eq!(s.ufpr, None);
        assert_eq!(s.ug_mean, None);
        assert_eq!(s.utpr, Some(1.0));

        let perfect = UncertaintyConfusion { tc: 3, tu: 2, fc: 0, fu: 0 };
        let s = perfect.scores();
        assert_eq!((s.uacc, s.utpr, s.ufpr, s.ug_mean), (Some(1.0), Some(1.0), Some(0.0), Some(1.0)));
    }

    #[test]
    fn sweep_examples() {
        let ok = [true, true, false, false];
        let h = [0.1, 0.7, 0.1, 0.9];
        let rows = threshold_sweep(&ok, &h, &[0.2, 0.5, 0.95]).unwrap();
        let cells: Vec<_> = rows.iter().map(|r| (r.confusion.tc, r.confusion.fu, r.confusion.fc, r.confusion.tu)).collect();
        assert_eq!(cells, alloc::vec![(1, 1, 1, 1), (1, 1, 1, 1), (2, 0, 2, 0)]);

        let rows = threshold_sweep(&[true, false], &[1.0, 0.5], &[0.0, 1.0]).unwrap();
        assert_eq!((rows[0].confusion.tc, rows[0].confusion.fc), (0, 0));
        assert_eq!((rows[1].confusion.fu, rows[1].confusion.fc), (1, 1));

        let single = threshold_sweep(&ok, &h, &[0.5]).unwrap();
        assert_eq!(single[0].confusion, uncertainty_confusion(&ok, &h, 0.5).unwrap());

        assert!(threshold_sweep(&ok, &h, &[0.5, 0.2]).is_err());
    }
}
