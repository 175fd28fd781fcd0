//! End-to-end trials on a split benchmark: the uncalibrated baseline,
//! standard isotonic calibration and dual calibration evaluated side by side
//! on the test subset, plus the K and beta ablations.

use alloc::string::String;
use alloc::vec::Vec;

use crate::conformal::{
    stratification_report, stratify, ConformalConfig, NeighborIndex, StratificationFlags,
    StratificationReport,
};
use crate::data::{LabelVector, ProbMatrix};
use crate::error::{domain, Result};
use crate::isotonic::MulticlassCalibrator;
use crate::metrics::{
    brier, correctness, label_scores, threshold_sweep, ReliabilityBins, SweepRow,
};
use crate::pipeline::DualCalibrator;
use crate::synth::{SplitData, TrialSplits};

pub const DEFAULT_TAUS: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Pass-through of the pass-mean probabilities.
    None,
    Isotonic,
    Dual,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::None, Method::Isotonic, Method::Dual];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Isotonic => "isotonic",
            Method::Dual => "dual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Metrics of one calibrated probability matrix. Correctness always refers to
/// the pre-calibration predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ece: f64,
    pub mce: f64,
    pub brier: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_confidence: f64,
    pub mean_entropy: f64,
    /// Mean entropy over incorrect predictions, `None` if there are none.
    pub mean_entropy_incorrect: Option<f64>,
    pub reliability: ReliabilityBins,
    pub sweep: Vec<SweepRow>,
}

impl Evaluation {
    /// Sweep row at exactly `tau`, if it was evaluated.
    pub fn at_tau(&self, tau: f64) -> Option<&SweepRow> {
        self.sweep.iter().find(|r| r.tau == tau)
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = v.len();
    (n > 0).then(|| v.sum::<f64>() / n as f64)
}

pub fn evaluate(
    probs: &ProbMatrix,
    labels: &LabelVector,
    predicted: &[usize],
    bins: usize,
    taus: &[f64],
) -> Result<Evaluation> {
    let scores = label_scores(predicted, labels)?;
    let correct = correctness(predicted, labels.as_slice());
    let reliability = ReliabilityBins::from_confidences(&probs.confidences(), &correct, bins)?;
    let entropies = probs.entropies()?;
    let incorrect: Vec<f64> = entropies
        .iter()
        .zip(&correct)
        .filter(|(_, &ok)| !ok)
        .map(|(h, _)| *h)
        .collect();
    Ok(Evaluation {
        ece: reliability.ece()?,
        mce: reliability.mce()?,
        brier: brier(probs, labels)?,
        accuracy: scores.accuracy,
        macro_f1: scores.macro_f1,
        mean_confidence: mean(probs.confidences().into_iter()).unwrap_or(0.0),
        mean_entropy: mean(entropies.iter().copied()).unwrap_or(0.0),
        mean_entropy_incorrect: mean(incorrect.into_iter()),
        sweep: threshold_sweep(&correct, &entropies, taus)?,
        reliability,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub conformal: ConformalConfig,
    pub beta: f64,
    pub bins: usize,
    pub taus: Vec<f64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            conformal: ConformalConfig::default(),
            beta: 0.9,
            bins: crate::metrics::DEFAULT_BINS,
            taus: DEFAULT_TAUS.to_vec(),
        }
    }
}

/// Index over the conformal subset scored with its pass-mean probabilities.
pub fn build_index(conformal: &SplitData) -> Result<NeighborIndex> {
    NeighborIndex::build(
        conformal.features.clone(),
        conformal.labels.clone(),
        &conformal.stack.mean_over_passes(),
    )
}

/// Stratifies a subset against `index` using its pass-mean predictions.
pub fn stratify_split(index: &NeighborIndex, part: &SplitData, config: &ConformalConfig) -> Result<StratificationFlags> {
    let mean = part.stack.mean_over_passes();
    stratify(index, &part.features, &mean, &mean.predicted_labels(), config)
}

/// Dual calibrator fitted on the calibration subset.
pub fn fit_dual(
    index: &NeighborIndex,
    calibration: &SplitData,
    beta: f64,
    config: ConformalConfig,
) -> Result<DualCalibrator> {
    let flags = stratify_split(index, calibration, &config)?;
    DualCalibrator::fit(
        &calibration.stack.mean_over_passes(),
        &calibration.labels,
        &flags,
        beta,
        config,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub calibrated: ProbMatrix,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Pre-calibration argmax on the test subset.
    pub predicted_labels: Vec<usize>,
    /// Test-set flags from the dual pipeline.
    pub flags: StratificationFlags,
    pub report: StratificationReport,
    pub methods: Vec<MethodOutcome>,
    pub warnings: Vec<String>,
}

impl TrialOutcome {
    pub fn method(&self, m: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|o| o.method == m)
    }
}

/// Runs every method in `methods` on the test subset.
pub fn run_trial(bench: TrialSplits<'_>, config: &TrialConfig, methods: &[Method]) -> Result<TrialOutcome> {
    let test_mean = bench.test.stack.mean_over_passes();
    let predicted = test_mean.predicted_labels();
    let index = build_index(bench.conformal)?;
    let dual = fit_dual(&index, bench.calibration, config.beta, config.conformal)?;
    let dual_out = dual.infer(&index, &bench.test.features, &bench.test.stack)?;
    if dual_out.predicted_labels != predicted {
        return Err(domain!("dual pipeline altered the predicted labels"));
    }
    let correct = correctness(&predicted, bench.test.labels.as_slice());
    let report = stratification_report(&dual_out.flags.flags, &correct)?;

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let calibrated = match method {
            Method::None => test_mean.clone(),
            Method::Isotonic => MulticlassCalibrator::fit_standard(
                &bench.calibration.stack.mean_over_passes(),
                &bench.calibration.labels,
            )?
            .apply(&test_mean)?,
            Method::Dual => dual_out.calibrated.clone(),
        };
        let evaluation = evaluate(&calibrated, &bench.test.labels, &predicted, config.bins, &config.taus)?;
        outcomes.push(MethodOutcome {
            method,
            calibrated,
            evaluation,
        });
    }
    Ok(TrialOutcome {
        predicted_labels: predicted,
        flags: dual_out.flags,
        report,
        methods: outcomes,
        warnings: dual.warnings().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationParam {
    K,
    Beta,
}

impl AblationParam {
    pub fn name(self) -> &'static str {
        match self {
            AblationParam::K => "k",
            AblationParam::Beta => "beta",
        }
    }
}

/// One grid point of an ablation, evaluated on the test subset under dual
/// calibration. Percentages are of all test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: f64,
    pub ece: f64,
    pub fc_pct: f64,
    pub tc_pct: f64,
    pub report: StratificationReport,
    pub mean_entropy_incorrect: Option<f64>,
}

/// Varies `K` (rounded grid values) or `beta` with everything else taken
/// from `base`. `tau` selects the threshold for FC% and TC%.
pub fn ablate(
    bench: TrialSplits<'_>,
    base: &TrialConfig,
    param: AblationParam,
    grid: &[f64],
    tau: f64,
) -> Result<Vec<AblationRow>> {
    let index = build_index(bench.conformal)?;
    let test_mean = bench.test.stack.mean_over_passes();
    let predicted = test_mean.predicted_labels();
    let correct = correctness(&predicted, bench.test.labels.as_slice());
    let n = correct.len() as f64;
    grid.iter()
        .map(|&value| {
            let (conformal, beta) = match param {
                AblationParam::K => {
                    if !(value >= 1.0 && libm::trunc(value) == value) {
                        return Err(domain!("K grid values must be positive integers, got {value}"));
                    }
                    (ConformalConfig::new(value as usize, base.conformal.alpha)?, base.beta)
                }
                AblationParam::Beta => (base.conformal, value),
            };
            let dual = fit_dual(&index, bench.calibration, beta, conformal)?;
            let out = dual.infer(&index, &bench.test.features, &bench.test.stack)?;
            let eval = evaluate(&out.calibrated, &bench.test.labels, &predicted, base.bins, &[tau])?;
            let cell = eval.sweep[0].confusion;
            Ok(AblationRow {
                value,
                ece: eval.ece,
                fc_pct: 100.0 * cell.fc as f64 / n,
                tc_pct: 100.0 * cell.tc as f64 / n,
                report: stratification_report(&out.flags.flags, &correct)?,
                mean_entropy_incorrect: eval.mean_entropy_incorrect,
            })
        })
        .collect()
}
