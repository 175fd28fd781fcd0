//! Run configuration: defaults, then a JSON config file, then flags.

use std::path::{Path, PathBuf};

use dualcal_core::conformal::ConformalConfig;
use dualcal_core::experiment::{Method, TrialConfig, DEFAULT_TAUS};
use dualcal_core::metrics::DEFAULT_BINS;
use dualcal_core::split::SplitSpec;
use dualcal_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats;

/// Generator settings. The generator seed is [`RunConfig::seed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub spread: f64,
    pub passes: usize,
    pub sharpness: f64,
    pub pass_noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = SynthConfig::default();
        Self {
            classes: c.classes,
            per_class: c.per_class,
            dim: c.dim,
            separation: c.separation,
            spread: c.spread,
            passes: c.passes,
            sharpness: c.sharpness,
            pass_noise: c.pass_noise,
        }
    }
}

/// Train, conformal, calibration and test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fractions {
    pub train: f64,
    pub conformal: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train,
            conformal: s.conformal,
            calibration: s.calibration,
            test: s.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub bins: usize,
    pub taus: Vec<f64>,
    pub mode: String,
    pub seed: u64,
    /// Bundle subset that `stratify` and `calibrate` score.
    pub split: String,
    pub synth: SynthSection,
    pub fractions: Fractions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let conformal = ConformalConfig::default();
        Self {
            input: None,
            output: None,
            k: conformal.k,
            alpha: conformal.alpha,
            beta: 0.9,
            bins: DEFAULT_BINS,
            taus: DEFAULT_TAUS.to_vec(),
            mode: Method::Dual.name().into(),
            seed: 0,
            split: "test".into(),
            synth: SynthSection::default(),
            fractions: Fractions::default(),
        }
    }
}

/// Flag values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub bins: Option<usize>,
    pub taus: Option<Vec<f64>>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub split: Option<String>,
}

pub const SPLITS: [&str; 4] = ["train", "conformal", "calibration", "test"];

fn bad(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("config field `{field}`: {message}"))
}

impl RunConfig {
    /// Defaults, overlaid by `file` when given, overlaid by `flags`.
    pub fn load(file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(path) => formats::read_json::<RunConfig>(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = flags.$f { cfg.$f = v; })* };
        }
        take!(k, alpha, beta, bins, taus, mode, seed, split);
        if flags.input.is_some() {
            cfg.input = flags.input;
        }
        if flags.output.is_some() {
            cfg.output = flags.output;
        }
        Ok(cfg)
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing input path: pass --in or set `input`".into()))
    }

    pub fn output(&self) -> Result<&Path, CliError> {
        self.output
            .as_deref()
            .ok_or_else(|| CliError::Usage("missing output directory: pass --out or set `output`".into()))
    }

    pub fn conformal(&self) -> Result<ConformalConfig, CliError> {
        ConformalConfig::new(self.k, self.alpha).map_err(|e| bad("k/alpha", e))
    }

    pub fn method(&self) -> Result<Method, CliError> {
        Method::parse(&self.mode).ok_or_else(|| bad("mode", format!("`{}` is not one of none, isotonic, dual", self.mode)))
    }

    pub fn check_beta(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(bad("beta", format!("{} is outside [0, 1]", self.beta)));
        }
        Ok(())
    }

    pub fn check_bins(&self) -> Result<(), CliError> {
        if self.bins == 0 {
            return Err(bad("bins", "must be positive"));
        }
        Ok(())
    }

    pub fn check_taus(&self) -> Result<(), CliError> {
        if self.taus.is_empty() {
            return Err(bad("taus", "must not be empty"));
        }
        if self.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(bad("taus", "every threshold must lie in [0, 1]"));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("taus", "thresholds must be strictly increasing"));
        }
        Ok(())
    }

    pub fn check_split(&self) -> Result<(), CliError> {
        if !SPLITS.contains(&self.split.as_str()) {
            return Err(bad("split", format!("`{}` is not one of {}", self.split, SPLITS.join(", "))));
        }
        Ok(())
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let s = self.synth;
        let cfg = SynthConfig {
            classes: s.classes,
            per_class: s.per_class,
            dim: s.dim,
            separation: s.separation,
            spread: s.spread,
            passes: s.passes,
            sharpness: s.sharpness,
            pass_noise: s.pass_noise,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| bad("synth", e))?;
        Ok(cfg)
    }

    pub fn split_spec(&self) -> Result<SplitSpec, CliError> {
        let f = self.fractions;
        let spec = SplitSpec {
            train: f.train,
            conformal: f.conformal,
            calibration: f.calibration,
            test: f.test,
            seed: self.seed,
        };
        spec.validate().map_err(|e| bad("fractions", e))?;
        Ok(spec)
    }

    /// Everything a trial needs, validated.
    pub fn trial(&self) -> Result<TrialConfig, CliError> {
        self.check_beta()?;
        self.check_bins()?;
        self.check_taus()?;
        Ok(TrialConfig {
            conformal: self.conformal()?,
            beta: self.beta,
            bins: self.bins,
            taus: self.taus.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"k": 7, "beta": 0.5, "synth": {"classes": 3}}"#).unwrap();
        let cfg = RunConfig::load(
            Some(&path),
            Overrides {
                beta: Some(0.25),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.k, 7);
        assert_eq!(cfg.beta, 0.25);
        assert_eq!(cfg.synth.classes, 3);
        assert_eq!(cfg.synth.dim, SynthSection::default().dim);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"kk": 7}"#).unwrap();
        let err = RunConfig::load(Some(&path), Overrides::default()).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(err.to_string().contains("kk"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = RunConfig {
            taus: vec![0.5, 0.2],
            ..RunConfig::default()
        };
        assert!(cfg.trial().unwrap_err().to_string().contains("`taus`"));
        let cfg = RunConfig {
            alpha: 1.5,
            ..RunConfig::default()
        };
        assert!(cfg.trial().unwrap_err().to_string().contains("k/alpha"));
        let cfg = RunConfig {
            mode: "focal".into(),
            ..RunConfig::default()
        };
        assert!(cfg.method().unwrap_err().to_string().contains("`mode`"));
    }
}
