//! Weighted isotonic regression by pool-adjacent-violators, and the
//! one-vs-rest multiclass calibrators built on it.
//!
//! A fitted [`IsotonicModel`] is a right-continuous step function. Block
//! boundaries sit at the midpoint between the last training score of one
//! block and the first training score of the next; queries outside the
//! training range clamp to the first or last block.

use alloc::vec::Vec;

use crate::data::{renormalize, LabelVector, ProbMatrix};
use crate::error::{domain, shape, Result};

/// One observation for [`pava_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub score: f64,
    pub target: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(score: f64, target: f64, weight: f64) -> Self {
        Self {
            score,
            target,
            weight,
        }
    }
}

/// Monotone non-decreasing step function.
///
/// `block_values` has one entry per block and `boundaries` one entry per
/// pair of adjacent blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicModel {
    boundaries: Vec<f64>,
    block_values: Vec<f64>,
    training_range: (f64, f64),
}

impl IsotonicModel {
    /// Rebuilds a model from its parts, checking every invariant.
    pub fn from_parts(
        boundaries: Vec<f64>,
        block_values: Vec<f64>,
        training_range: (f64, f64),
    ) -> Result<Self> {
        if block_values.len() != boundaries.len() + 1 {
            return Err(shape!(
                "{} block values for {} boundaries",
                block_values.len(),
                boundaries.len()
            ));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain!("boundaries must be strictly increasing"));
        }
        if block_values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(domain!("block values must be non-decreasing"));
        }
        if boundaries
            .iter()
            .chain(&block_values)
            .any(|v| !v.is_finite())
            || !(training_range.0 <= training_range.1)
        {
            return Err(domain!("model parts must be finite with an ordered range"));
        }
        Ok(Self {
            boundaries,
            block_values,
            training_range,
        })
    }

    /// Constant model, as fitted on scores without variance.
    pub fn constant(value: f64, training_range: (f64, f64)) -> Self {
        Self {
            boundaries: Vec::new(),
            block_values: alloc::vec![value],
            training_range,
        }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn block_values(&self) -> &[f64] {
        &self.block_values
    }

    pub fn training_range(&self) -> (f64, f64) {
        self.training_range
    }

    /// Value of the block containing `score`. A score equal to a boundary
    /// belongs to the block on its right.
    pub fn predict(&self, score: f64) -> f64 {
        let block = self.boundaries.partition_point(|&b| b <= score);
        self.block_values[block]
    }
}

struct Block {
    weighted_sum: f64,
    weight: f64,
    first_score: f64,
    last_score: f64,
}

impl Block {
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

/// Fits the weighted least-squares monotone step function to `points`.
///
/// Points sharing a score are merged into one point carrying their total
/// weight and weighted mean target, so the fit does not depend on input
/// order. Adjacent blocks are pooled whenever the left mean is not below the
/// right mean, which leaves strictly increasing block values.
pub fn pava_fit(points: &[WeightedPoint]) -> Result<IsotonicModel> {
    if points.is_empty() {
        return Err(domain!("isotonic fit needs at least one point"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.score.is_nan() || !p.target.is_finite() {
            return Err(domain!(
                "point {i} has score {} and target {}; both must be numbers",
                p.score,
                p.target
            ));
        }
        if !(p.weight > 0.0) || !p.weight.is_finite() {
            return Err(domain!("point {i} has non-positive weight {}", p.weight));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut blocks: Vec<Block> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        let mut block = Block {
            weighted_sum: 0.0,
            weight: 0.0,
            first_score: score,
            last_score: score,
        };
        while i < sorted.len() && sorted[i].score == score {
            block.weighted_sum += sorted[i].weight * sorted[i].target;
            block.weight += sorted[i].weight;
            i += 1;
        }
        blocks.push(block);
        while blocks.len() >= 2 {
            let n = blocks.len();
            if blocks[n - 2].mean() < blocks[n - 1].mean() {
                break;
            }
            let right = blocks.pop().expect("two blocks present");
            let left = blocks.last_mut().expect("two blocks present");
            left.weighted_sum += right.weighted_sum;
            left.weight += right.weight;
            left.last_score = right.last_score;
        }
    }

    let boundaries = blocks
        .windows(2)
        .map(|w| 0.5 * (w[0].last_score + w[1].first_score))
        .collect();
    let block_values = blocks.iter().map(Block::mean).collect();
    let training_range = (sorted[0].score, sorted[sorted.len() - 1].score);
    Ok(IsotonicModel {
        boundaries,
        block_values,
        training_range,
    })
}

/// Targets pulled toward the uniform distribution:
/// `beta * p + (1 - beta) / classes` for each entry.
pub fn underconfidence_targets(probs: &[f64], beta: f64, classes: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if classes == 0 {
        return Err(domain!("class count must be positive"));
    }
    let floor = (1.0 - beta) / classes as f64;
    Ok(probs.iter().map(|&p| beta * p + floor).collect())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(domain!("underconfidence factor must lie in [0, 1], got {beta}"));
    }
    Ok(())
}

/// Which targets a [`MulticlassCalibrator`] was fitted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMode {
    /// One-vs-rest indicator targets from the true labels.
    Standard,
    /// Targets `beta * p + (1 - beta) / C` built from the scores themselves.
    Underconfident { beta: f64 },
}

/// One isotonic model per class column.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassCalibrator {
    models: Vec<IsotonicModel>,
    mode: CalibrationMode,
}

impl MulticlassCalibrator {
    pub fn from_parts(models: Vec<IsotonicModel>, mode: CalibrationMode) -> Result<Self> {
        if models.is_empty() {
            return Err(shape!("calibrator needs at least one class model"));
        }
        if let CalibrationMode::Underconfident { beta } = mode {
            check_beta(beta)?;
        }
        Ok(Self { models, mode })
    }

    /// Fits class `c` on `(p_c, 1[y = c])` with unit weights.
    pub fn fit_standard(probs: &ProbMatrix, labels: &LabelVector) -> Result<Self> {
        check_fit_size(probs)?;
        if labels.len() != probs.samples() {
            return Err(shape!(
                "{} labels for {} probability rows",
                labels.len(),
                probs.samples()
            ));
        }
        if labels.classes() != probs.classes() {
            return Err(shape!(
                "labels index {} classes, probabilities have {}",
                labels.classes(),
                probs.classes()
            ));
        }
        let models = (0..probs.classes())
            .map(|c| {
                let points: Vec<_> = probs
                    .rows()
                    .zip(labels.as_slice())
                    .map(|(row, &y)| WeightedPoint::new(row[c], if y == c { 1.0 } else { 0.0 }, 1.0))
                    .collect();
                pava_fit(&points)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            models,
            mode: CalibrationMode::Standard,
        })
    }

    /// Fits class `c` on `(p_c, beta * p_c + (1 - beta) / C)`. Labels are
    /// not consulted.
    pub fn fit_underconfident(probs: &ProbMatrix, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        check_fit_size(probs)?;
        let classes = probs.classes();
        let models = (0..classes)
            .map(|c| {
                let scores = probs.column(c);
                let targets = underconfidence_targets(&scores, beta, classes)?;
                let points: Vec<_> = scores
                    .iter()
                    .zip(&targets)
                    .map(|(&s, &t)| WeightedPoint::new(s, t, 1.0))
                    .collect();
                pava_fit(&points)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            models,
            mode: CalibrationMode::Underconfident { beta },
        })
    }

    pub fn classes(&self) -> usize {
        self.models.len()
    }

    pub fn mode(&self) -> CalibrationMode {
        self.mode
    }

    pub fn beta(&self) -> Option<f64> {
        match self.mode {
            CalibrationMode::Standard => None,
            CalibrationMode::Underconfident { beta } => Some(beta),
        }
    }

    pub fn models(&self) -> &[IsotonicModel] {
        &self.models
    }

    /// Per-class transform of one row, before renormalization.
    pub(crate) fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(self.models.iter().zip(row).map(|(m, &p)| m.predict(p)));
    }

    /// Transforms every class column and renormalizes each row.
    pub fn apply(&self, probs: &ProbMatrix) -> Result<ProbMatrix> {
        if probs.classes() != self.classes() {
            return Err(domain!(
                "calibrator fitted on {} classes applied to {}",
                self.classes(),
                probs.classes()
            ));
        }
        let mut raw = Vec::with_capacity(probs.samples() * probs.classes());
        for row in probs.rows() {
            self.transform_row(row, &mut raw);
        }
        renormalize(raw, probs.classes())
    }
}

fn check_fit_size(probs: &ProbMatrix) -> Result<()> {
    if probs.samples() < 2 {
        return Err(domain!(
            "calibrator fit needs at least 2 samples, got {}",
            probs.samples()
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(scores: &[f64], targets: &[f64]) -> Vec<WeightedPoint> {
        scores
            .iter()
            .zip(targets)
            .map(|(&s, &t)| WeightedPoint::new(s, t, 1.0))
            .collect()
    }

    #[test]
    fn already_monotone_pair() {
        let m = pava_fit(&unit(&[0.1, 0.2], &[0.0, 1.0])).unwrap();
        assert_eq!(m.predict(0.1), 0.0);
        assert_eq!(m.predict(0.2), 1.0);
    }

    #[test]
    fn violating_pair_pools_to_half() {
        let m = pava_fit(&unit(&[0.1, 0.2], &[1.0, 0.0])).unwrap();
        assert_eq!(m.block_values(), &[0.5]);
        assert_eq!(m.predict(0.1), 0.5);
        assert_eq!(m.predict(0.2), 0.5);
    }

    #[test]
    fn four_point_step_and_right_continuity() {
        let m = pava_fit(&unit(&[0.1, 0.3, 0.4, 0.8], &[0.0, 0.0, 1.0, 1.0])).unwrap();
        let fitted: Vec<f64> = [0.1, 0.3, 0.4, 0.8].iter().map(|&s| m.predict(s)).collect();
        assert_eq!(fitted, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.boundaries().len(), 1);
        assert!((m.boundaries()[0] - 0.35).abs() < 1e-15);
        assert_eq!(m.predict(m.boundaries()[0]), 1.0);
        assert_eq!(m.predict(0.349), 0.0);
    }

    #[test]
    fn clamps_outside_training_range() {
        let m = pava_fit(&unit(&[0.2, 0.5, 0.9], &[0.1, 0.4, 0.8])).unwrap();
        assert_eq!(m.predict(-5.0), 0.1);
        assert_eq!(m.predict(0.0), 0.1);
        assert_eq!(m.predict(7.0), 0.8);
        assert_eq!(m.training_range(), (0.2, 0.9));
    }

    #[test]
    fn duplicate_scores_merge_by_weight() {
        let pts = [
            WeightedPoint::new(0.5, 1.0, 3.0),
            WeightedPoint::new(0.5, 0.0, 1.0),
            WeightedPoint::new(0.2, 0.0, 1.0),
        ];
        let m = pava_fit(&pts).unwrap();
        assert_eq!(m.predict(0.5), 0.75);
        assert_eq!(m.predict(0.2), 0.0);
        let mut reversed = pts;
        reversed.reverse();
        assert_eq!(pava_fit(&reversed).unwrap(), m);
    }

    #[test]
    fn fit_errors() {
        assert!(pava_fit(&[]).is_err());
        assert!(pava_fit(&unit(&[f64::NAN], &[0.0])).is_err());
        assert!(pava_fit(&unit(&[0.1], &[f64::NAN])).is_err());
        assert!(pava_fit(&[WeightedPoint::new(0.1, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn underconfidence_target_arithmetic() {
        let p = [0.0, 0.3, 0.8, 1.0];
        assert_eq!(underconfidence_targets(&p, 1.0, 10).unwrap(), p.to_vec());
        for t in underconfidence_targets(&p, 0.0, 10).unwrap() {
            assert!((t - 0.1).abs() < 1e-15);
        }
        let t = underconfidence_targets(&[0.8], 0.5, 10).unwrap();
        assert!((t[0] - 0.45).abs() < 1e-15);
        assert!(underconfidence_targets(&p, 1.5, 10).is_err());
        assert!(underconfidence_targets(&p, -0.1, 10).is_err());
    }

    #[test]
    fn standard_fit_on_separated_binary_scores() {
        let probs = ProbMatrix::from_rows(&[[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]]).unwrap();
        let labels = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        let cal = MulticlassCalibrator::fit_standard(&probs, &labels).unwrap();
        let m0 = &cal.models()[0];
        assert_eq!(m0.predict(0.1), 0.0);
        assert_eq!(m0.predict(0.3), 0.0);
        assert_eq!(m0.predict(0.8), 1.0);
        assert_eq!(m0.predict(0.9), 1.0);
        let m1 = &cal.models()[1];
        assert_eq!(m1.predict(0.2), 0.0);
        assert_eq!(m1.predict(0.7), 1.0);
    }

    #[test]
    fn single_class_labels_give_constant_models() {
        let probs = ProbMatrix::from_rows(&[[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.4, 0.4, 0.2]]).unwrap();
        let labels = LabelVector::new(vec![1, 1, 1], 3).unwrap();
        let cal = MulticlassCalibrator::fit_standard(&probs, &labels).unwrap();
        assert_eq!(cal.models()[1].block_values(), &[1.0]);
        assert_eq!(cal.models()[0].block_values(), &[0.0]);
        assert_eq!(cal.models()[2].block_values(), &[0.0]);
    }

    #[test]
    fn fit_rejects_single_sample_and_mismatch() {
        let one = ProbMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let labels = LabelVector::new(vec![0], 2).unwrap();
        assert!(MulticlassCalibrator::fit_standard(&one, &labels).is_err());
        assert!(MulticlassCalibrator::fit_underconfident(&one, 0.5).is_err());
        let two = ProbMatrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert!(MulticlassCalibrator::fit_standard(&two, &labels).is_err());
    }

    #[test]
    fn underconfident_fit_values() {
        let rows: Vec<[f64; 10]> = [0.2, 0.7]
            .iter()
            .map(|&p| {
                let mut r = [(1.0 - p) / 9.0; 10];
                r[0] = p;
                r
            })
            .collect();
        let probs = ProbMatrix::from_rows(&rows).unwrap();
        let cal = MulticlassCalibrator::fit_underconfident(&probs, 0.9).unwrap();
        let m = &cal.models()[0];
        assert!((m.predict(0.2) - 0.19).abs() < 1e-12);
        assert!((m.predict(0.7) - 0.64).abs() < 1e-12);
        assert_eq!(cal.beta(), Some(0.9));
    }

    #[test]
    fn beta_zero_collapses_to_uniform() {
        let probs = ProbMatrix::from_rows(&[[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4]]).unwrap();
        let cal = MulticlassCalibrator::fit_underconfident(&probs, 0.0).unwrap();
        for m in cal.models() {
            assert_eq!(m.block_values().len(), 1);
            assert!((m.block_values()[0] - 1.0 / 3.0).abs() < 1e-15);
        }
        let out = cal.apply(&probs).unwrap();
        for row in out.rows() {
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_one_recovers_distinct_inputs() {
        let probs = ProbMatrix::from_rows(&[
            [0.7, 0.2, 0.1],
            [0.15, 0.25, 0.6],
            [0.3, 0.35, 0.35],
            [0.5, 0.05, 0.45],
        ])
        .unwrap();
        let cal = MulticlassCalibrator::fit_underconfident(&probs, 1.0).unwrap();
        let out = cal.apply(&probs).unwrap();
        for (a, b) in out.as_slice().iter().zip(probs.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standard_apply_on_training_scores_renormalizes_pooled_blocks() {
        // Column 0 scores 0.9, 0.6, 0.4, 0.2 with labels 0, 1, 0, 1: the
        // violating middle pair pools to 0.5. Column 1 mirrors it.
        let probs = ProbMatrix::from_rows(&[[0.9, 0.1], [0.6, 0.4], [0.4, 0.6], [0.2, 0.8]]).unwrap();
        let labels = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let cal = MulticlassCalibrator::fit_standard(&probs, &labels).unwrap();
        assert_eq!(cal.models()[0].block_values(), &[0.0, 0.5, 1.0]);
        assert_eq!(cal.models()[1].block_values(), &[0.0, 0.5, 1.0]);
        let out = cal.apply(&probs).unwrap();
        let expected = [[1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [0.0, 1.0]];
        for (row, exp) in out.rows().zip(&expected) {
            assert_eq!(row, exp);
        }
    }

    #[test]
    fn apply_rejects_class_mismatch() {
        let probs = ProbMatrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        let cal = MulticlassCalibrator::fit_underconfident(&probs, 0.5).unwrap();
        let three = ProbMatrix::from_rows(&[[0.2, 0.3, 0.5]]).unwrap();
        assert!(cal.apply(&three).is_err());
    }

    #[test]
    fn from_parts_checks_invariants() {
        assert!(IsotonicModel::from_parts(vec![0.5], vec![0.1, 0.2], (0.0, 1.0)).is_ok());
        assert!(IsotonicModel::from_parts(vec![0.5], vec![0.3, 0.2], (0.0, 1.0)).is_err());
        assert!(IsotonicModel::from_parts(vec![0.5, 0.5], vec![0.1, 0.2, 0.3], (0.0, 1.0)).is_err());
        assert!(IsotonicModel::from_parts(vec![], vec![0.1, 0.2], (0.0, 1.0)).is_err());
    }
}
