//! Gaussian-cluster data with a distance-softmax surrogate for stochastic
//! forward passes.
//!
//! Logits for pass `t` are `-sharpness * ||x - mu_c|| + pass_noise * eps`
//! with independent standard normal `eps`. Large `sharpness` gives an
//! overconfident model; the pass noise spreads the passes so that their mean
//! is smoother than any single pass.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{FeatureMatrix, LabelVector, PredictionStack};
use crate::error::{config, shape, Result};
use crate::split::{split, SplitIndices, SplitSpec};

// Stream ids keep features and pass noise independent under one seed.
const FEATURE_STREAM: u64 = 0;
const PASS_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance of every centroid from the origin.
    pub separation: f64,
    /// Standard deviation of each feature around its centroid.
    pub spread: f64,
    pub passes: usize,
    pub sharpness: f64,
    pub pass_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 600,
            dim: 16,
            separation: 2.4,
            spread: 1.0,
            passes: 20,
            sharpness: 8.0,
            pass_noise: 1.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn samples(&self) -> usize {
        self.classes * self.per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(config!("need at least 2 classes, got {}", self.classes));
        }
        if self.per_class == 0 || self.dim == 0 || self.passes == 0 {
            return Err(config!(
                "samples per class, feature dimension and passes must be positive"
            ));
        }
        let positive = [("separation", self.separation), ("sharpness", self.sharpness)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [("spread", self.spread), ("pass_noise", self.pass_noise)];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Features, labels and the generating centroids (`classes x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub centroids: FeatureMatrix,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples are class-major: the first `per_class` rows are class 0.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = rng(cfg.seed, FEATURE_STREAM);
    let d = cfg.dim;
    let mut centroids = Vec::with_capacity(cfg.classes * d);
    for _ in 0..cfg.classes {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = libm::sqrt(dir.iter().map(|v| v * v).sum());
        // A zero draw has probability zero; fall back to the first axis.
        if norm > 0.0 {
            centroids.extend(dir.iter().map(|v| v / norm * cfg.separation));
        } else {
            centroids.push(cfg.separation);
            centroids.extend(core::iter::repeat_n(0.0, d - 1));
        }
    }
    let n = cfg.samples();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..cfg.classes {
        let mu = &centroids[c * d..(c + 1) * d];
        for _ in 0..cfg.per_class {
            features.extend(mu.iter().map(|m| {
                let e: f64 = rng.sample(StandardNormal);
                m + cfg.spread * e
            }));
            labels.push(c);
        }
    }
    Ok(SynthData {
        features: FeatureMatrix::new(n, d, features)?,
        labels: LabelVector::new(labels, cfg.classes)?,
        centroids: FeatureMatrix::new(cfg.classes, d, centroids)?,
    })
}

/// Softmax of `logits` in place, shifted by the maximum for stability.
fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// `cfg.passes` stochastic prediction rows per sample. The noise stream is
/// seeded from `cfg.seed` independently of [`generate`].
pub fn simulate_passes(features: &FeatureMatrix, centroids: &FeatureMatrix, cfg: &SynthConfig) -> Result<PredictionStack> {
    cfg.validate()?;
    if centroids.samples() != cfg.classes || centroids.dim() != features.dim() {
        return Err(shape!(
            "centroids are {}x{}, expected {}x{}",
            centroids.samples(),
            centroids.dim(),
            cfg.classes,
            features.dim()
        ));
    }
    let n = features.samples();
    let c = cfg.classes;
    let dist: Vec<f64> = (0..n)
        .flat_map(|i| {
            let x = features.row(i);
            (0..c).map(move |k| {
                let d2: f64 = x
                    .iter()
                    .zip(centroids.row(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                libm::sqrt(d2)
            })
        })
        .collect();
    let mut rng = rng(cfg.seed, PASS_STREAM);
    let mut values = Vec::with_capacity(cfg.passes * n * c);
    for _ in 0..cfg.passes {
        for i in 0..n {
            let start = values.len();
            for k in 0..c {
                let e: f64 = rng.sample(StandardNormal);
                values.push(-cfg.sharpness * dist[i * c + k] + cfg.pass_noise * e);
            }
            softmax(&mut values[start..]);
        }
    }
    PredictionStack::new(cfg.passes, n, c, values)
}

/// Features, labels and stochastic predictions for one subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub stack: PredictionStack,
}

impl SplitData {
    fn select(features: &FeatureMatrix, labels: &LabelVector, stack: &PredictionStack, idx: &[usize]) -> Self {
        Self {
            features: features.select(idx),
            labels: labels.select(idx),
            stack: stack.select(idx),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub config: SynthConfig,
    pub split_spec: SplitSpec,
    pub indices: SplitIndices,
    pub centroids: FeatureMatrix,
    pub train: SplitData,
    pub conformal: SplitData,
    pub calibration: SplitData,
    pub test: SplitData,
}

/// Borrowed view of the subsets a trial reads: the conformal subset backs
/// the neighbor index, the calibration subset fits, the test subset scores.
#[derive(Debug, Clone, Copy)]
pub struct TrialSplits<'a> {
    pub conformal: &'a SplitData,
    pub calibration: &'a SplitData,
    pub test: &'a SplitData,
}

impl Benchmark {
    pub fn trial_splits(&self) -> TrialSplits<'_> {
        TrialSplits {
            conformal: &self.conformal,
            calibration: &self.calibration,
            test: &self.test,
        }
    }

    /// Subsets in the order train, conformal, calibration, test.
    pub fn parts(&self) -> [(&'static str, &SplitData); 4] {
        [
            ("train", &self.train),
            ("conformal", &self.conformal),
            ("calibration", &self.calibration),
            ("test", &self.test),
        ]
    }
}

/// Generates data and passes, then splits them.
pub fn make_benchmark(cfg: &SynthConfig, split_spec: &SplitSpec) -> Result<Benchmark> {
    let data = generate(cfg)?;
    let stack = simulate_passes(&data.features, &data.centroids, cfg)?;
    let indices = split(cfg.samples(), split_spec)?;
    let part = |idx: &[usize]| SplitData::select(&data.features, &data.labels, &stack, idx);
    Ok(Benchmark {
        config: *cfg,
        split_spec: *split_spec,
        train: part(&indices.train),
        conformal: part(&indices.conformal),
        calibration: part(&indices.calibration),
        test: part(&indices.test),
        indices,
        centroids: data.centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            classes: 3,
            per_class: 20,
            dim: 4,
            passes: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_spread_puts_samples_on_centroids() {
        let cfg = SynthConfig { spread: 0.0, ..small() };
        let d = generate(&cfg).unwrap();
        for i in 0..d.features.samples() {
            assert_eq!(d.features.row(i), d.centroids.row(d.labels.as_slice()[i]));
        }
        for k in 0..cfg.classes {
            let r: f64 = d.centroids.row(k).iter().map(|v| v * v).sum();
            assert!((libm::sqrt(r) - cfg.separation).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = small();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg };
        assert_ne!(generate(&cfg).unwrap().features, generate(&other).unwrap().features);
    }

    #[test]
    fn noiseless_passes_are_identical() {
        let cfg = SynthConfig { pass_noise: 0.0, ..small() };
        let d = generate(&cfg).unwrap();
        let s = simulate_passes(&d.features, &d.centroids, &cfg).unwrap();
        for t in 1..cfg.passes {
            assert_eq!(s.pass(t), s.pass(0));
        }
    }

    #[test]
    fn sharp_model_at_centroid_is_nearly_one_hot() {
        let cfg = SynthConfig {
            spread: 0.0,
            pass_noise: 0.0,
            sharpness: 50.0,
            ..small()
        };
        let d = generate(&cfg).unwrap();
        let s = simulate_passes(&d.features, &d.centroids, &cfg).unwrap();
        let m = s.mean_over_passes();
        for (row, &y) in m.rows().zip(d.labels.as_slice()) {
            assert!(row[y] > 0.999);
        }
    }

    #[test]
    fn default_benchmark_shapes() {
        let b = make_benchmark(&SynthConfig::default(), &SplitSpec::default()).unwrap();
        let sizes: Vec<usize> = b.parts().iter().map(|(_, p)| p.labels.len()).collect();
        assert_eq!(sizes, alloc::vec![3300, 900, 900, 900]);
        assert_eq!(b.test.stack.passes(), 20);
        assert_eq!(b.test.features.dim(), 16);
    }

    #[test]
    fn invalid_configs() {
        assert!(SynthConfig { classes: 1, ..small() }.validate().is_err());
        assert!(SynthConfig { passes: 0, ..small() }.validate().is_err());
        assert!(SynthConfig { sharpness: 0.0, ..small() }.validate().is_err());
        assert!(SynthConfig { spread: -1.0, ..small() }.validate().is_err());
    }
}
