//! Subcommand bodies. Each writes its artifacts through an [`Artifacts`]
//! and returns what goes into the manifest.

use std::path::Path;

use dualcal_core::conformal::StratificationReport;
use dualcal_core::experiment::{ablate, build_index, evaluate, fit_dual, stratify_split, AblationParam, AblationRow, Method};
use dualcal_core::isotonic::MulticlassCalibrator;
use dualcal_core::metrics::{correctness, threshold_sweep, Bin, SweepRow};
use dualcal_core::stats::{compare_to_reference, friedman, RunMatrix, WilcoxonMethod};
use dualcal_core::synth::{make_benchmark, SplitData, TrialSplits};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{self, Calibrator};
use crate::manifest::Artifacts;

/// Manifest payload of a finished subcommand.
#[derive(Debug)]
pub struct Outcome {
    pub details: serde_json::Value,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(details: serde_json::Value) -> Self {
        Self {
            details,
            warnings: Vec::new(),
        }
    }
}

fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

fn load_split(bundle: &Path, name: &str) -> Result<SplitData, CliError> {
    Ok(formats::read_split(&bundle.join(name))?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn serialize_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let runtime = |e: &dyn std::fmt::Display| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| runtime(&e))?;
    }
    w.flush().map_err(|e| runtime(&e))
}

pub fn synth(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let synth = cfg.synth_config()?;
    let spec = cfg.split_spec()?;
    let bench = make_benchmark(&synth, &spec)?;
    let mut sizes = serde_json::Map::new();
    for (name, part) in bench.parts() {
        std::fs::create_dir_all(out.root().join(name))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.root().join(name).display())))?;
        formats::write_features(&out.path(&format!("{name}/{}", formats::FEATURES)), &part.features)?;
        formats::write_labels(&out.path(&format!("{name}/{}", formats::LABELS)), part.labels.as_slice())?;
        for t in 0..part.stack.passes() {
            formats::write_probs(&out.path(&format!("{name}/{}", formats::pass_file(t))), &part.stack.pass(t))?;
        }
        sizes.insert(name.into(), json!(part.labels.len()));
    }
    Ok(Outcome::new(json!({
        "samples": synth.samples(),
        "split_sizes": sizes,
    })))
}

#[derive(Debug, Serialize)]
struct StratifyReport<'a> {
    split: &'a str,
    samples: usize,
    k: usize,
    alpha: f64,
    correct_count: usize,
    incorrect_count: usize,
    correct_size_pct: f64,
    correct_accuracy_pct: Option<f64>,
    incorrect_size_pct: f64,
    incorrect_accuracy_pct: Option<f64>,
}

pub fn stratify(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let bundle = cfg.input()?;
    cfg.check_split()?;
    let conformal = cfg.conformal()?;
    let index = build_index(&load_split(bundle, "conformal")?)?;
    let target = load_split(bundle, &cfg.split)?;
    let flags = stratify_split(&index, &target, &conformal)?;
    let predicted = target.stack.mean_over_passes().predicted_labels();
    let correct = correctness(&predicted, target.labels.as_slice());
    let r: StratificationReport = dualcal_core::conformal::stratification_report(&flags.flags, &correct)?;
    formats::write_flags(&out.path(formats::FLAGS), &flags)?;
    let n = flags.len();
    let report = StratifyReport {
        split: &cfg.split,
        samples: n,
        k: conformal.k,
        alpha: conformal.alpha,
        correct_count: flags.count_correct(),
        incorrect_count: n - flags.count_correct(),
        correct_size_pct: r.correct_size_pct,
        correct_accuracy_pct: r.correct_accuracy_pct,
        incorrect_size_pct: r.incorrect_size_pct,
        incorrect_accuracy_pct: r.incorrect_accuracy_pct,
    };
    formats::write_json(&out.path("report.json"), &report)?;
    Ok(Outcome::new(json!({ "split": cfg.split, "samples": n })))
}

/// Fits on the calibration subset and calibrates `cfg.split`. The output
/// directory is self-contained for `evaluate` and `sweep`: `predicted.csv`
/// keeps the pre-calibration labels and `labels.csv` the true ones.
pub fn calibrate(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let bundle = cfg.input()?;
    cfg.check_split()?;
    let method = cfg.method()?;
    let target = load_split(bundle, &cfg.split)?;
    let mean = target.stack.mean_over_passes();
    let predicted = mean.predicted_labels();
    let mut warnings = Vec::new();
    let (calibrator, calibrated, flags) = match method {
        Method::None => (Calibrator::PassThrough { classes: mean.classes() }, mean.clone(), None),
        Method::Isotonic => {
            let cal = load_split(bundle, "calibration")?;
            let c = MulticlassCalibrator::fit_standard(&cal.stack.mean_over_passes(), &cal.labels)?;
            let calibrated = c.apply(&mean)?;
            (Calibrator::Isotonic(c), calibrated, None)
        }
        Method::Dual => {
            cfg.check_beta()?;
            let index = build_index(&load_split(bundle, "conformal")?)?;
            let cal = load_split(bundle, "calibration")?;
            let dual = fit_dual(&index, &cal, cfg.beta, cfg.conformal()?)?;
            let result = dual.infer(&index, &target.features, &target.stack)?;
            warnings.extend_from_slice(dual.warnings());
            (Calibrator::Dual(dual), result.calibrated, Some(result.flags))
        }
    };
    calibrator.write(&out.path(formats::CALIBRATOR))?;
    formats::write_probs(&out.path(formats::PROBS), &calibrated)?;
    formats::write_column(&out.path(formats::ENTROPY), "entropy", &calibrated.entropies()?)?;
    formats::write_labels(&out.path(formats::PREDICTED), &predicted)?;
    formats::write_labels(&out.path(formats::LABELS), target.labels.as_slice())?;
    if let Some(flags) = &flags {
        formats::write_flags(&out.path(formats::FLAGS), flags)?;
    }
    Ok(Outcome {
        details: json!({
            "mode": method.name(),
            "split": cfg.split,
            "samples": calibrated.samples(),
            "classes": calibrated.classes(),
            "flagged_correct": flags.as_ref().map(|f| f.count_correct()),
        }),
        warnings,
    })
}

/// Probabilities, true labels and the labels correctness is judged by.
struct Scored {
    probs: dualcal_core::data::ProbMatrix,
    labels: dualcal_core::data::LabelVector,
    predicted: Vec<usize>,
}

fn load_scored(dir: &Path) -> Result<Scored, CliError> {
    let probs = formats::read_mean_probs(dir)?;
    let labels_path = dir.join(formats::LABELS);
    let labels = formats::read_labels(&labels_path, probs.classes())?;
    if labels.len() != probs.samples() {
        return Err(CliError::Validation(format!(
            "{}: {} labels for {} probability rows",
            labels_path.display(),
            labels.len(),
            probs.samples()
        )));
    }
    let predicted_path = dir.join(formats::PREDICTED);
    let predicted = if predicted_path.exists() {
        let p = formats::read_labels(&predicted_path, probs.classes())?;
        if p.len() != probs.samples() {
            return Err(CliError::Validation(format!(
                "{}: {} labels for {} probability rows",
                predicted_path.display(),
                p.len(),
                probs.samples()
            )));
        }
        p.as_slice().to_vec()
    } else {
        probs.predicted_labels()
    };
    Ok(Scored { probs, labels, predicted })
}

/// One threshold of the uncertainty confusion, as written to `sweep.csv`
/// and to the `uncertainty` block of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRecord {
    pub tau: f64,
    pub tc: usize,
    pub tu: usize,
    pub fc: usize,
    pub fu: usize,
    pub tc_pct: f64,
    pub tu_pct: f64,
    pub fc_pct: f64,
    pub fu_pct: f64,
    pub uacc_pct: Option<f64>,
    pub utpr_pct: Option<f64>,
    pub ufpr_pct: Option<f64>,
    pub ug_mean_pct: Option<f64>,
}

impl From<&SweepRow> for SweepRecord {
    fn from(r: &SweepRow) -> Self {
        let m = r.confusion;
        let n = m.total();
        let p = |v: Option<f64>| v.map(|v| 100.0 * v);
        Self {
            tau: r.tau,
            tc: m.tc,
            tu: m.tu,
            fc: m.fc,
            fu: m.fu,
            tc_pct: pct(m.tc, n),
            tu_pct: pct(m.tu, n),
            fc_pct: pct(m.fc, n),
            fu_pct: pct(m.fu, n),
            uacc_pct: p(r.scores.uacc),
            utpr_pct: p(r.scores.utpr),
            ufpr_pct: p(r.scores.ufpr),
            ug_mean_pct: p(r.scores.ug_mean),
        }
    }
}

#[derive(Debug, Serialize)]
struct ReliabilityRecord {
    bin_lo: f64,
    bin_hi: f64,
    confidence: Option<f64>,
    accuracy: Option<f64>,
    count: usize,
}

impl From<&Bin> for ReliabilityRecord {
    fn from(b: &Bin) -> Self {
        Self {
            bin_lo: b.lo,
            bin_hi: b.hi,
            confidence: b.confidence,
            accuracy: b.accuracy,
            count: b.count,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    samples: usize,
    classes: usize,
    bins: usize,
    ece_pct: f64,
    mce_pct: f64,
    brier: f64,
    accuracy_pct: f64,
    macro_f1_pct: f64,
    mean_confidence: f64,
    mean_entropy: f64,
    mean_entropy_incorrect: Option<f64>,
    uncertainty: Vec<SweepRecord>,
}

pub fn evaluate_dir(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    cfg.check_bins()?;
    cfg.check_taus()?;
    let s = load_scored(cfg.input()?)?;
    let e = evaluate(&s.probs, &s.labels, &s.predicted, cfg.bins, &cfg.taus)?;
    let report = EvaluationReport {
        samples: s.probs.samples(),
        classes: s.probs.classes(),
        bins: cfg.bins,
        ece_pct: 100.0 * e.ece,
        mce_pct: 100.0 * e.mce,
        brier: e.brier,
        accuracy_pct: 100.0 * e.accuracy,
        macro_f1_pct: 100.0 * e.macro_f1,
        mean_confidence: e.mean_confidence,
        mean_entropy: e.mean_entropy,
        mean_entropy_incorrect: e.mean_entropy_incorrect,
        uncertainty: e.sweep.iter().map(SweepRecord::from).collect(),
    };
    formats::write_json(&out.path("report.json"), &report)?;
    serialize_rows(&out.path("reliability.csv"), e.reliability.bins().iter().map(ReliabilityRecord::from))?;
    Ok(Outcome::new(json!({ "samples": report.samples, "ece_pct": report.ece_pct })))
}

pub fn sweep(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    cfg.check_taus()?;
    let s = load_scored(cfg.input()?)?;
    let correct = correctness(&s.predicted, s.labels.as_slice());
    let rows = threshold_sweep(&correct, &s.probs.entropies()?, &cfg.taus)?;
    serialize_rows(&out.path("sweep.csv"), rows.iter().map(SweepRecord::from))?;
    Ok(Outcome::new(json!({ "samples": correct.len(), "thresholds": rows.len() })))
}

#[derive(Debug, Serialize)]
struct RankRecord<'a> {
    method: &'a str,
    average_rank: f64,
}

#[derive(Debug, Serialize)]
struct PairwiseRecord<'a> {
    reference: &'a str,
    baseline: &'a str,
    w: Option<f64>,
    p_value: Option<f64>,
    holm_p: Option<f64>,
    test: Option<&'static str>,
    n_effective: Option<usize>,
    cliffs_delta: f64,
    median_difference: f64,
}

#[derive(Debug, Serialize)]
struct CompareReport<'a> {
    metrics: String,
    runs: usize,
    lower_is_better: bool,
    friedman_statistic: f64,
    friedman_p_value: f64,
    average_ranks: Vec<RankRecord<'a>>,
    pairwise: Vec<PairwiseRecord<'a>>,
}

/// Friedman across all columns and one-sided Wilcoxon of `reference` against
/// every other column. With `higher_is_better` the values are negated for
/// testing; effect sizes are reported on the original scale.
pub fn compare(
    cfg: &RunConfig,
    out: &mut Artifacts,
    reference: Option<&str>,
    higher_is_better: bool,
) -> Result<Outcome, CliError> {
    let path = cfg.input()?;
    let (methods, mut columns) = formats::read_metric_columns(path)?;
    let reference_idx = match reference {
        None => 0,
        Some(name) => methods.iter().position(|m| m == name).ok_or_else(|| {
            CliError::Validation(format!("{}: no column named `{name}`", path.display()))
        })?,
    };
    let sign = if higher_is_better { -1.0 } else { 1.0 };
    for col in &mut columns {
        col.iter_mut().for_each(|v| *v *= sign);
    }
    let rm = RunMatrix::from_columns(methods.clone(), &columns).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let fr = friedman(&rm);
    let rows = compare_to_reference(&rm, reference_idx)?;
    let report = CompareReport {
        metrics: path.display().to_string(),
        runs: rm.runs(),
        lower_is_better: !higher_is_better,
        friedman_statistic: fr.statistic,
        friedman_p_value: fr.p_value,
        average_ranks: methods
            .iter()
            .zip(&fr.average_ranks)
            .map(|(m, &r)| RankRecord {
                method: m,
                average_rank: r,
            })
            .collect(),
        pairwise: rows
            .iter()
            .map(|r| PairwiseRecord {
                reference: &r.reference,
                baseline: &r.baseline,
                w: r.wilcoxon.map(|w| w.statistic),
                p_value: r.wilcoxon.map(|w| w.p_value),
                holm_p: r.holm_p,
                test: r.wilcoxon.map(|w| match w.method {
                    WilcoxonMethod::Exact => "exact",
                    WilcoxonMethod::Normal => "normal",
                }),
                n_effective: r.wilcoxon.map(|w| w.n_effective),
                cliffs_delta: sign * r.cliffs_delta,
                median_difference: sign * r.median_difference,
            })
            .collect(),
    };
    formats::write_json(&out.path("report.json"), &report)?;
    Ok(Outcome::new(json!({
        "methods": methods,
        "reference": methods[reference_idx],
        "runs": rm.runs(),
    })))
}

#[derive(Debug, Serialize)]
struct AblationRecord {
    param: &'static str,
    value: f64,
    ece_pct: f64,
    fc_pct: f64,
    tc_pct: f64,
    correct_size_pct: f64,
    correct_accuracy_pct: Option<f64>,
    incorrect_size_pct: f64,
    incorrect_accuracy_pct: Option<f64>,
    mean_entropy_incorrect: Option<f64>,
}

impl AblationRecord {
    fn new(param: AblationParam, r: &AblationRow) -> Self {
        Self {
            param: param.name(),
            value: r.value,
            ece_pct: 100.0 * r.ece,
            fc_pct: r.fc_pct,
            tc_pct: r.tc_pct,
            correct_size_pct: r.report.correct_size_pct,
            correct_accuracy_pct: r.report.correct_accuracy_pct,
            incorrect_size_pct: r.report.incorrect_size_pct,
            incorrect_accuracy_pct: r.report.incorrect_accuracy_pct,
            mean_entropy_incorrect: r.mean_entropy_incorrect,
        }
    }
}

pub fn ablation(
    cfg: &RunConfig,
    out: &mut Artifacts,
    param: AblationParam,
    grid: &[f64],
    tau: f64,
) -> Result<Outcome, CliError> {
    let bundle = cfg.input()?;
    let base = cfg.trial()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Validation(format!("--tau {tau} is outside [0, 1]")));
    }
    if grid.is_empty() {
        return Err(CliError::Usage("--grid needs at least one value".into()));
    }
    let conformal = load_split(bundle, "conformal")?;
    let calibration = load_split(bundle, "calibration")?;
    let test = load_split(bundle, "test")?;
    let splits = TrialSplits {
        conformal: &conformal,
        calibration: &calibration,
        test: &test,
    };
    let rows = ablate(splits, &base, param, grid, tau)?;
    serialize_rows(&out.path("ablation.csv"), rows.iter().map(|r| AblationRecord::new(param, r)))?;
    Ok(Outcome::new(json!({
        "param": param.name(),
        "grid": grid,
        "tau": tau,
    })))
}
