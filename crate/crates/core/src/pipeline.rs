//! Routed calibration: putatively correct rows go through a standard
//! isotonic calibrator, the rest through an underconfidence-regularized one.

use alloc::string::String;
use alloc::vec::Vec;

use crate::conformal::{stratify, ConformalConfig, NeighborIndex, StratificationFlags};
use crate::data::{renormalize, FeatureMatrix, LabelVector, PredictionStack, ProbMatrix};
use crate::error::{config, domain, shape, Result};
use crate::isotonic::MulticlassCalibrator;

/// The pair of fitted calibrators plus the settings used to stratify.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCalibrator {
    standard: MulticlassCalibrator,
    underconfident: MulticlassCalibrator,
    config: ConformalConfig,
    beta: f64,
    warnings: Vec<String>,
}

impl DualCalibrator {
    /// Fits the standard calibrator on rows flagged correct and the
    /// underconfident calibrator on the rest. With no row flagged incorrect,
    /// the underconfident calibrator is fitted with `beta = 1` on every row
    /// and a warning is recorded.
    pub fn fit(
        cal_probs: &ProbMatrix,
        cal_labels: &LabelVector,
        cal_flags: &StratificationFlags,
        beta: f64,
        config: ConformalConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(domain!("beta must lie in [0, 1], got {beta}"));
        }
        let n = cal_probs.samples();
        if cal_labels.len() != n || cal_flags.len() != n {
            return Err(shape!(
                "{n} calibration rows, {} labels and {} flags",
                cal_labels.len(),
                cal_flags.len()
            ));
        }
        let (correct, incorrect): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| cal_flags.flags[i]);
        if correct.is_empty() {
            return Err(config!(
                "no calibration sample is flagged putatively correct; the standard calibrator cannot be fitted"
            ));
        }
        let standard = MulticlassCalibrator::fit_standard(
            &cal_probs.select(&correct),
            &cal_labels.select(&correct),
        )?;
        let mut warnings = Vec::new();
        let underconfident = if incorrect.is_empty() {
            warnings.push(String::from(
                "no calibration sample is flagged putatively incorrect; the underconfident calibrator was fitted with beta = 1 on all calibration samples",
            ));
            MulticlassCalibrator::fit_underconfident(cal_probs, 1.0)?
        } else {
            MulticlassCalibrator::fit_underconfident(&cal_probs.select(&incorrect), beta)?
        };
        Ok(Self {
            standard,
            underconfident,
            config,
            beta,
            warnings,
        })
    }

    pub fn from_parts(
        standard: MulticlassCalibrator,
        underconfident: MulticlassCalibrator,
        config: ConformalConfig,
        beta: f64,
    ) -> Result<Self> {
        config.validate()?;
        if standard.classes() != underconfident.classes() {
            return Err(shape!(
                "standard calibrator has {} classes, underconfident has {}",
                standard.classes(),
                underconfident.classes()
            ));
        }
        Ok(Self {
            standard,
            underconfident,
            config,
            beta,
            warnings: Vec::new(),
        })
    }

    pub fn standard(&self) -> &MulticlassCalibrator {
        &self.standard
    }

    pub fn underconfident(&self) -> &MulticlassCalibrator {
        &self.underconfident
    }

    pub fn config(&self) -> ConformalConfig {
        self.config
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn classes(&self) -> usize {
        self.standard.classes()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Row `i` goes through the standard calibrator iff `flags[i]`.
    pub fn apply(&self, probs: &ProbMatrix, flags: &[bool]) -> Result<ProbMatrix> {
        let c = self.classes();
        if probs.classes() != c {
            return Err(domain!(
                "calibrator fitted on {c} classes applied to {} classes",
                probs.classes()
            ));
        }
        if flags.len() != probs.samples() {
            return Err(shape!(
                "{} flags for {} rows",
                flags.len(),
                probs.samples()
            ));
        }
        let mut out = Vec::with_capacity(probs.samples() * c);
        for (row, &f) in probs.rows().zip(flags) {
            let cal = if f { &self.standard } else { &self.underconfident };
            cal.transform_row(row, &mut out);
        }
        renormalize(out, c)
    }

    /// Averages passes, stratifies against `index`, routes and calibrates,
    /// and scores the calibrated rows by normalized entropy.
    pub fn infer(
        &self,
        index: &NeighborIndex,
        features: &FeatureMatrix,
        stack: &PredictionStack,
    ) -> Result<PipelineOutput> {
        let mean = stack.mean_over_passes();
        let predicted_labels = mean.predicted_labels();
        let flags = stratify(index, features, &mean, &predicted_labels, &self.config)?;
        let calibrated = self.apply(&mean, &flags.flags)?;
        let entropies = calibrated.entropies()?;
        Ok(PipelineOutput {
            calibrated,
            entropies,
            flags,
            predicted_labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub calibrated: ProbMatrix,
    pub entropies: Vec<f64>,
    pub flags: StratificationFlags,
    /// Argmax of the pre-calibration pass mean, ties low.
    pub predicted_labels: Vec<usize>,
}
