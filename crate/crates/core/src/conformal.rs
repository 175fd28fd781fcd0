//! Proximity-based conformal stratification.
//!
//! For each query the `k` nearest conformal-set samples (exact Euclidean
//! search) supply nonconformity scores `1 - p̂_y`. Their `(1 - alpha)`
//! order statistic is the local threshold `q`, and the prediction set holds
//! every class with `1 - p_c <= q`. A sample is putatively correct only when
//! that set is exactly `{predicted label}`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::{FeatureMatrix, LabelVector, ProbMatrix};
use crate::error::{config, domain, shape, Result};

/// Neighborhood size and miscoverage rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalConfig {
    pub k: usize,
    pub alpha: f64,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self { k: 20, alpha: 0.01 }
    }
}

impl ConformalConfig {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        let cfg = Self { k, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(config!("neighbor count k must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    /// Rank of the order statistic used as the local quantile.
    pub fn quantile_rank(&self) -> usize {
        quantile_rank(self.k, self.alpha)
    }
}

fn quantile_rank(k: usize, alpha: f64) -> usize {
    // Guard against (1 - 0.1) * 20 landing a hair above 18.
    let m = libm::ceil((1.0 - alpha) * k as f64 - 1e-9);
    (m.max(1.0) as usize).min(k)
}

/// One retrieved neighbor: position in the conformal set and its distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Conformal-set features, labels and precomputed nonconformity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    features: FeatureMatrix,
    labels: LabelVector,
    nonconformity: Vec<f64>,
}

impl NeighborIndex {
    /// Scores each conformal sample as `1 - mean_probs[j][labels[j]]`.
    pub fn build(features: FeatureMatrix, labels: LabelVector, mean_probs: &ProbMatrix) -> Result<Self> {
        if features.samples() != labels.len() || labels.len() != mean_probs.samples() {
            return Err(shape!(
                "conformal set has {} feature rows, {} labels and {} probability rows",
                features.samples(),
                labels.len(),
                mean_probs.samples()
            ));
        }
        if labels.classes() != mean_probs.classes() {
            return Err(shape!(
                "labels index {} classes, probabilities have {}",
                labels.classes(),
                mean_probs.classes()
            ));
        }
        let nonconformity = mean_probs
            .rows()
            .zip(labels.as_slice())
            .map(|(row, &y)| (1.0 - row[y]).clamp(0.0, 1.0))
            .collect();
        Ok(Self {
            features,
            labels,
            nonconformity,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn nonconformity(&self) -> &[f64] {
        &self.nonconformity
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    /// The `k` nearest stored points, ascending by distance with ties to the
    /// lower index. Exhaustive search.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if k > self.len() {
            return Err(domain!(
                "requested {k} neighbors from an index of {}",
                self.len()
            ));
        }
        if query.len() != self.dim() {
            return Err(shape!(
                "query has {} features, index has {}",
                query.len(),
                self.dim()
            ));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut cand: Vec<(f64, usize)> = (0..self.len())
            .map(|j| {
                let d2: f64 = self
                    .features
                    .row(j)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
        }
        cand.sort_unstable_by(order);
        Ok(cand
            .into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: libm::sqrt(d2),
            })
            .collect())
    }
}

/// The `m`-th smallest score with `m = ceil((1 - alpha) k)` clamped to
/// `[1, k]`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(domain!("conformal quantile of an empty score set"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain!("alpha must lie in (0, 1), got {alpha}"));
    }
    let m = quantile_rank(scores.len(), alpha);
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[m - 1])
}

/// Classes `c` with `1 - p_c <= q`, ascending.
pub fn prediction_set(row: &[f64], q: f64) -> Vec<usize> {
    row.iter()
        .enumerate()
        .filter(|(_, &p)| 1.0 - p <= q)
        .map(|(c, _)| c)
        .collect()
}

/// Per-sample stratification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StratificationFlags {
    /// `true` marks a putatively correct sample.
    pub flags: Vec<bool>,
    pub set_sizes: Vec<usize>,
    pub quantiles: Vec<f64>,
}

impl StratificationFlags {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Flags with invariant `flag => set_size == 1` checked.
    pub fn new(flags: Vec<bool>, set_sizes: Vec<usize>, quantiles: Vec<f64>) -> Result<Self> {
        if flags.len() != set_sizes.len() || flags.len() != quantiles.len() {
            return Err(shape!(
                "{} flags, {} set sizes and {} quantiles",
                flags.len(),
                set_sizes.len(),
                quantiles.len()
            ));
        }
        if let Some(i) = flags.iter().zip(&set_sizes).position(|(&f, &s)| f && s != 1) {
            return Err(domain!(
                "sample {i} is flagged correct with a prediction set of size {}",
                set_sizes[i]
            ));
        }
        Ok(Self {
            flags,
            set_sizes,
            quantiles,
        })
    }

    /// Number of putatively correct samples.
    pub fn count_correct(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Flags each row of `mean_probs` by singleton matching against
/// `predicted_labels`. Empty and multi-class sets are putatively incorrect.
pub fn stratify(
    index: &NeighborIndex,
    features: &FeatureMatrix,
    mean_probs: &ProbMatrix,
    predicted_labels: &[usize],
    config: &ConformalConfig,
) -> Result<StratificationFlags> {
    config.validate()?;
    if config.k > index.len() {
        return Err(config!(
            "k = {} exceeds the conformal set size {}",
            config.k,
            index.len()
        ));
    }
    let n = features.samples();
    if mean_probs.samples() != n || predicted_labels.len() != n {
        return Err(shape!(
            "{n} feature rows, {} probability rows and {} predicted labels",
            mean_probs.samples(),
            predicted_labels.len()
        ));
    }
    let mut flags = Vec::with_capacity(n);
    let mut set_sizes = Vec::with_capacity(n);
    let mut quantiles = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(config.k);
    for i in 0..n {
        let neighbors = index.knn(features.row(i), config.k)?;
        scores.clear();
        scores.extend(neighbors.iter().map(|nb| index.nonconformity[nb.index]));
        let q = conformal_quantile(&scores, config.alpha)?;
        let set = prediction_set(mean_probs.row(i), q);
        flags.push(set.len() == 1 && set[0] == predicted_labels[i]);
        set_sizes.push(set.len());
        quantiles.push(q);
    }
    Ok(StratificationFlags {
        flags,
        set_sizes,
        quantiles,
    })
}

/// Group sizes and accuracies in percent. Accuracy of an empty group is
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratificationReport {
    pub correct_size_pct: f64,
    pub correct_accuracy_pct: Option<f64>,
    pub incorrect_size_pct: f64,
    pub incorrect_accuracy_pct: Option<f64>,
}

pub fn stratification_report(flags: &[bool], correctness: &[bool]) -> Result<StratificationReport> {
    if flags.len() != correctness.len() {
        return Err(shape!(
            "{} flags for {} correctness values",
            flags.len(),
            correctness.len()
        ));
    }
    if flags.is_empty() {
        return Err(domain!("stratification report of zero samples"));
    }
    let n = flags.len() as f64;
    let mut count = [0usize; 2];
    let mut hits = [0usize; 2];
    for (&f, &ok) in flags.iter().zip(correctness) {
        let g = usize::from(!f);
        count[g] += 1;
        hits[g] += usize::from(ok);
    }
    let acc = |g: usize| (count[g] > 0).then(|| 100.0 * hits[g] as f64 / count[g] as f64);
    Ok(StratificationReport {
        correct_size_pct: 100.0 * count[0] as f64 / n,
        correct_accuracy_pct: acc(0),
        incorrect_size_pct: 100.0 * count[1] as f64 / n,
        incorrect_accuracy_pct: acc(1),
    })
}
