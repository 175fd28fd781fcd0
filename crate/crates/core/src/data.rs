//! Numeric containers shared by every stage, plus the small row-wise
//! operations (pass averaging, normalized entropy, renormalization).
//!
//! Containers validate on construction and are immutable afterwards.
//! Class indices are 0-based.

use alloc::vec::Vec;

use crate::error::{domain, shape, Error, Result};

/// Row-sum tolerance applied when ingesting probability rows. Loose enough
/// for float32 dumps from external models.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Rows whose total mass falls below this are treated as uninformative and
/// mapped to the uniform distribution by [`renormalize`].
pub const DEGENERATE_ROW_SUM: f64 = 1e-12;

fn check_prob_row(row: &[f64], pass: Option<usize>, index: usize) -> Result<()> {
    for (c, &v) in row.iter().enumerate() {
        if !v.is_finite() || !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&v) {
            return Err(Error::OutOfRange {
                what: "probability",
                row: index,
                col: c,
                value: v,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::RowSum {
            pass,
            row: index,
            sum,
            tolerance: ROW_SUM_TOLERANCE,
        });
    }
    Ok(())
}

/// Index of the largest entry, ties resolved to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Row-stochastic `samples × classes` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    samples: usize,
    classes: usize,
    values: Vec<f64>,
}

impl ProbMatrix {
    /// Validates every row: entries in `[0, 1]`, row sums within
    /// [`ROW_SUM_TOLERANCE`] of one.
    pub fn new(samples: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(shape!("probability matrix needs at least one class"));
        }
        if values.len() != samples * classes {
            return Err(shape!(
                "{} values for a {samples}x{classes} probability matrix",
                values.len()
            ));
        }
        for (n, row) in values.chunks_exact(classes).enumerate() {
            check_prob_row(row, None, n)?;
        }
        Ok(Self {
            samples,
            classes,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let classes = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * classes);
        for (n, r) in rows.iter().enumerate() {
            if r.as_ref().len() != classes {
                return Err(shape!(
                    "row {n} has {} entries, expected {classes}",
                    r.as_ref().len()
                ));
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), classes, values)
    }

    pub(crate) fn from_raw(samples: usize, classes: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), samples * classes);
        Self {
            samples,
            classes,
            values,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.classes..(n + 1) * self.classes]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.classes)
    }

    /// Class column `c` as an owned vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Argmax of every row, ties to the lowest class index.
    pub fn predicted_labels(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Maximum probability of every row.
    pub fn confidences(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Rows picked by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.classes);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_raw(indices.len(), self.classes, values)
    }

    /// Normalized entropy of every row.
    pub fn entropies(&self) -> Result<Vec<f64>> {
        self.rows().map(normalized_entropy).collect()
    }
}

/// `passes × samples × classes` stack of stochastic probability rows, one
/// matrix per stochastic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStack {
    passes: usize,
    samples: usize,
    classes: usize,
    values: Vec<f64>,
}

impl PredictionStack {
    /// Validates every `(pass, sample)` row. Layout is pass-major.
    pub fn new(passes: usize, samples: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if passes == 0 {
            return Err(shape!("prediction stack needs at least one pass"));
        }
        if classes < 2 {
            return Err(shape!("prediction stack needs at least two classes"));
        }
        if values.len() != passes * samples * classes {
            return Err(shape!(
                "{} values for a {passes}x{samples}x{classes} prediction stack",
                values.len()
            ));
        }
        for (i, row) in values.chunks_exact(classes).enumerate() {
            check_prob_row(row, Some(i / samples.max(1)), i % samples.max(1))?;
        }
        Ok(Self {
            passes,
            samples,
            classes,
            values,
        })
    }

    /// Stacks already-validated per-pass matrices.
    pub fn from_passes(passes: &[ProbMatrix]) -> Result<Self> {
        let first = passes
            .first()
            .ok_or_else(|| shape!("prediction stack needs at least one pass"))?;
        let (samples, classes) = (first.samples(), first.classes());
        let mut values = Vec::with_capacity(passes.len() * samples * classes);
        for (t, p) in passes.iter().enumerate() {
            if p.samples() != samples || p.classes() != classes {
                return Err(shape!(
                    "pass {t} is {}x{}, expected {samples}x{classes}",
                    p.samples(),
                    p.classes()
                ));
            }
            values.extend_from_slice(p.as_slice());
        }
        Self::new(passes.len(), samples, classes, values)
    }

    pub(crate) fn from_raw(passes: usize, samples: usize, classes: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), passes * samples * classes);
        Self {
            passes,
            samples,
            classes,
            values,
        }
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, pass: usize, sample: usize) -> &[f64] {
        let start = (pass * self.samples + sample) * self.classes;
        &self.values[start..start + self.classes]
    }

    /// Matrix of a single pass.
    pub fn pass(&self, t: usize) -> ProbMatrix {
        let len = self.samples * self.classes;
        ProbMatrix::from_raw(
            self.samples,
            self.classes,
            self.values[t * len..(t + 1) * len].to_vec(),
        )
    }

    /// Same passes restricted to the samples in `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.passes * indices.len() * self.classes);
        for t in 0..self.passes {
            for &n in indices {
                values.extend_from_slice(self.row(t, n));
            }
        }
        Self::from_raw(self.passes, indices.len(), self.classes, values)
    }

    /// Empirical mean over the stochastic passes.
    pub fn mean_over_passes(&self) -> ProbMatrix {
        let len = self.samples * self.classes;
        let mut acc = alloc::vec![0.0; len];
        for pass in self.values.chunks_exact(len.max(1)).take(self.passes) {
            for (a, &v) in acc.iter_mut().zip(pass) {
                *a += v;
            }
        }
        let scale = 1.0 / self.passes as f64;
        for a in &mut acc {
            *a *= scale;
        }
        ProbMatrix::from_raw(self.samples, self.classes, acc)
    }
}

/// Class labels with the class count they index into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Label {
                row,
                label,
                classes,
            });
        }
        Ok(Self { labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

/// `samples × dim` matrix of finite feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    samples: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(samples: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != samples * dim {
            return Err(shape!(
                "{} values for a {samples}x{dim} feature matrix",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                what: "feature",
                row: i / dim.max(1),
                col: i % dim.max(1),
                value: values[i],
            });
        }
        Ok(Self {
            samples,
            dim,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (n, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(shape!(
                    "row {n} has {} features, expected {dim}",
                    r.as_ref().len()
                ));
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), dim, values)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            samples: indices.len(),
            dim: self.dim,
            values,
        }
    }
}

/// Shannon entropy of `row` divided by `ln C`, with `0 ln 0 = 0`, clamped to
/// `[0, 1]`. The class count is the row length.
pub fn normalized_entropy(row: &[f64]) -> Result<f64> {
    let classes = row.len();
    if classes < 2 {
        return Err(domain!(
            "normalized entropy needs at least two classes, got {classes}"
        ));
    }
    let h: f64 = row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * libm::log(p))
        .sum();
    Ok((h / libm::log(classes as f64)).clamp(0.0, 1.0))
}

/// Divides each row of a non-negative `rows × classes` matrix by its sum.
/// Rows with total mass below [`DEGENERATE_ROW_SUM`] become uniform.
pub fn renormalize(mut values: Vec<f64>, classes: usize) -> Result<ProbMatrix> {
    if classes == 0 || !values.len().is_multiple_of(classes) {
        return Err(shape!(
            "{} values cannot be split into rows of {classes} classes",
            values.len()
        ));
    }
    if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(domain!(
            "renormalize needs finite non-negative entries, found {} at row {}, column {}",
            values[i],
            i / classes,
            i % classes
        ));
    }
    let uniform = 1.0 / classes as f64;
    for row in values.chunks_exact_mut(classes) {
        let sum: f64 = row.iter().sum();
        if sum < DEGENERATE_ROW_SUM {
            row.fill(uniform);
        } else {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
    let samples = values.len() / classes;
    Ok(ProbMatrix::from_raw(samples, classes, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Independent summation oracle: accumulates per row in sample-major
    // order rather than pass-major.
    fn mean_oracle(stack: &PredictionStack) -> Vec<f64> {
        let mut out = Vec::new();
        for n in 0..stack.samples() {
            for c in 0..stack.classes() {
                let s: f64 = (0..stack.passes()).map(|t| stack.row(t, n)[c]).sum();
                out.push(s / stack.passes() as f64);
            }
        }
        out
    }

    #[test]
    fn mean_single_pass_is_identity() {
        let stack = PredictionStack::new(1, 2, 2, vec![0.3, 0.7, 0.9, 0.1]).unwrap();
        assert_eq!(stack.mean_over_passes().as_slice(), &[0.3, 0.7, 0.9, 0.1]);
    }

    #[test]
    fn mean_of_opposite_one_hots() {
        let stack = PredictionStack::new(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(stack.mean_over_passes().row(0), &[0.5, 0.5]);
    }

    #[test]
    fn mean_of_three_passes() {
        let stack = PredictionStack::new(3, 1, 2, vec![0.9, 0.1, 0.6, 0.4, 0.3, 0.7]).unwrap();
        let mean = stack.mean_over_passes();
        let oracle = mean_oracle(&stack);
        for (a, b) in mean.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((mean.row(0)[0] - 0.6).abs() < 1e-12);
        assert!((mean.row(0)[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stack_row_sum_error_names_pass_and_row() {
        let err = PredictionStack::new(2, 2, 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.2, 0.2])
            .unwrap_err();
        match err {
            Error::RowSum { pass, row, .. } => {
                assert_eq!(pass, Some(1));
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tolerance_accepts_float32_noise() {
        assert!(ProbMatrix::new(1, 2, vec![0.6000001, 0.4]).is_ok());
        assert!(ProbMatrix::new(1, 2, vec![0.61, 0.4]).is_err());
        assert!(ProbMatrix::new(1, 2, vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn entropy_edge_values() {
        assert_eq!(normalized_entropy(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        for c in 2..12 {
            let row = vec![1.0 / c as f64; c];
            assert!((normalized_entropy(&row).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((normalized_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(normalized_entropy(&[1.0]).is_err());
    }

    #[test]
    fn renormalize_cases() {
        let m = renormalize(vec![0.2, 0.2], 2).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        let m = renormalize(vec![0.0, 0.0, 0.0], 3).unwrap();
        for &v in m.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let already = vec![0.1, 0.2, 0.7];
        let m = renormalize(already.clone(), 3).unwrap();
        for (a, b) in m.as_slice().iter().zip(&already) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(renormalize(vec![-0.1, 1.1], 2), Err(Error::Domain(_))));
    }

    #[test]
    fn labels_validate_range() {
        assert!(LabelVector::new(vec![0, 1, 2], 3).is_ok());
        assert_eq!(
            LabelVector::new(vec![0, 3], 3).unwrap_err(),
            Error::Label {
                row: 1,
                label: 3,
                classes: 3
            }
        );
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn features_reject_non_finite() {
        assert!(FeatureMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }
}
