//! Seeded four-way partition into training, conformal, calibration and test
//! subsets.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Result};

/// Fractions for the four subsets and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub conformal: f64,
    pub calibration: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.55,
            conformal: 0.15,
            calibration: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.conformal, self.calibration, self.test];
        if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(config!("split fractions must be non-negative, got {fr:?}"));
        }
        let total: f64 = fr.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config!("split fractions sum to {total}, expected 1"));
        }
        Ok(())
    }

    /// Subset sizes for `n` samples: `floor(fraction * n)` for the conformal,
    /// calibration and test subsets, remainder to training.
    pub fn sizes(&self, n: usize) -> [usize; 4] {
        // The epsilon keeps products such as 0.15 * 20 = 3.0000000000000004
        // and 0.29 * 100 = 28.999999999999996 on the intended integer.
        let floor = |f: f64| libm::floor(f * n as f64 + 1e-9) as usize;
        let conformal = floor(self.conformal);
        let calibration = floor(self.calibration);
        let test = floor(self.test);
        let train = n.saturating_sub(conformal + calibration + test);
        [train, conformal, calibration, test]
    }
}

/// Disjoint, exhaustive index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub conformal: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> [usize; 4] {
        [
            self.train.len(),
            self.conformal.len(),
            self.calibration.len(),
            self.test.len(),
        ]
    }
}

/// Shuffles `0..n` with a ChaCha8 stream seeded from `spec.seed` and cuts it
/// into the four subsets in the order train, conformal, calibration, test.
pub fn split(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n < 4 {
        return Err(config!("need at least 4 samples to split, got {n}"));
    }
    let sizes = spec.sizes(n);
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        let name = ["train", "conformal", "calibration", "test"][i];
        return Err(config!(
            "{name} subset would be empty for {n} samples with fractions {:?}",
            [spec.train, spec.conformal, spec.calibration, spec.test]
        ));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    perm.shuffle(&mut rng);

    let mut parts = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut start = 0;
    for (part, &size) in parts.iter_mut().zip(&sizes) {
        let mut idx = perm[start..start + size].to_vec();
        idx.sort_unstable();
        *part = idx;
        start += size;
    }
    let [train, conformal, calibration, test] = parts;
    Ok(SplitIndices {
        train,
        conformal,
        calibration,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_fractions_on_twenty() {
        let s = split(20, &SplitSpec::with_seed(7)).unwrap();
        assert_eq!(s.sizes(), [11, 3, 3, 3]);
    }

    #[test]
    fn quarters_on_four() {
        let spec = SplitSpec {
            train: 0.25,
            conformal: 0.25,
            calibration: 0.25,
            test: 0.25,
            seed: 1,
        };
        assert_eq!(split(4, &spec).unwrap().sizes(), [1, 1, 1, 1]);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SplitSpec::with_seed(99);
        assert_eq!(split(100, &spec).unwrap(), split(100, &spec).unwrap());
        assert_ne!(
            split(100, &spec).unwrap(),
            split(100, &SplitSpec::with_seed(100)).unwrap()
        );
    }

    #[test]
    fn default_benchmark_sizes() {
        assert_eq!(SplitSpec::default().sizes(6000), [3300, 900, 900, 900]);
    }

    #[test]
    fn empty_subset_is_a_config_error() {
        assert!(split(5, &SplitSpec::default()).is_err());
        assert!(split(3, &SplitSpec::default()).is_err());
        let bad = SplitSpec {
            train: 0.5,
            ..SplitSpec::default()
        };
        assert!(split(100, &bad).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_exhaustive(n in 7usize..400, seed in any::<u64>()) {
            let s = split(n, &SplitSpec::with_seed(seed)).unwrap();
            let mut all: Vec<usize> = s.train.iter()
                .chain(&s.conformal).chain(&s.calibration).chain(&s.test)
                .copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
