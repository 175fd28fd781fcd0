//! Command-line front end for `dualcal-core`: CSV/JSON artifacts, run
//! configuration and the `dualcal` subcommands.
//!
//! ```text
//! dualcal synth     --out bundle
//! dualcal stratify  --in bundle --out strat
//! dualcal calibrate --in bundle --out cal --mode dual
//! dualcal evaluate  --in cal --out eval
//! dualcal sweep     --in cal --out sweep --taus 0.2,0.5
//! dualcal compare   --in fc.csv --out cmp --reference dual
//! dualcal ablate    --in bundle --out abl --param beta --grid 0,0.5,1
//! ```
//!
//! Exit status: 0 on success, 1 for runtime failures (IO), 2 for usage
//! errors, 3 for validation errors.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualcal_core::experiment::AblationParam;

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;

use config::{Overrides, RunConfig};
use error::CliError;
use manifest::Artifacts;

#[derive(Debug, Parser)]
#[command(name = "dualcal", version, about = "Dual isotonic calibration with conformal stratification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Settings shared by every subcommand. Each overrides the `--config` file.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input bundle, directory or file.
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Neighbors per conformal quantile.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Conformal miscoverage level.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Underconfidence factor.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Reliability bins.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Ascending entropy thresholds, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Calibration mode: none, isotonic or dual.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Bundle subset to stratify or calibrate.
    #[arg(long, global = true)]
    pub split: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bundle.
    Synth(SynthArgs),
    /// Flag samples of a bundle subset by conformal singleton matching.
    Stratify,
    /// Fit a calibrator on the calibration subset and apply it.
    Calibrate,
    /// Calibration and uncertainty metrics of a scored directory.
    Evaluate,
    /// Uncertainty confusion over entropy thresholds.
    Sweep,
    /// Friedman and pairwise Wilcoxon tests on a per-run metric table.
    Compare {
        /// Column tested against every other; defaults to the first.
        #[arg(long)]
        reference: Option<String>,
        /// Treat larger values as better.
        #[arg(long)]
        higher_is_better: bool,
    },
    /// Dual calibration over a grid of K or beta.
    Ablate {
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        /// Entropy threshold for FC% and TC%.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Param {
    K,
    Beta,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub sharpness: Option<f64>,
    #[arg(long)]
    pub pass_noise: Option<f64>,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.synth;
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { s.$f = v; })* };
        }
        take!(classes, per_class, dim, passes, separation, spread, sharpness, pass_noise);
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Stratify => "stratify",
            Command::Calibrate => "calibrate",
            Command::Evaluate => "evaluate",
            Command::Sweep => "sweep",
            Command::Compare { .. } => "compare",
            Command::Ablate { .. } => "ablate",
        }
    }
}

/// Runs one subcommand and writes its manifest.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let c = cli.common;
    let mut cfg = RunConfig::load(
        c.config.as_deref(),
        Overrides {
            input: c.input,
            output: c.out,
            k: c.k,
            alpha: c.alpha,
            beta: c.beta,
            bins: c.bins,
            taus: c.taus,
            mode: c.mode,
            seed: c.seed,
            split: c.split,
        },
    )?;
    if let Command::Synth(args) = &cli.command {
        args.apply(&mut cfg);
    }
    let mut out = Artifacts::new(cfg.output()?)?;
    let outcome = match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, &mut out),
        Command::Stratify => commands::stratify(&cfg, &mut out),
        Command::Calibrate => commands::calibrate(&cfg, &mut out),
        Command::Evaluate => commands::evaluate_dir(&cfg, &mut out),
        Command::Sweep => commands::sweep(&cfg, &mut out),
        Command::Compare {
            reference,
            higher_is_better,
        } => commands::compare(&cfg, &mut out, reference.as_deref(), *higher_is_better),
        Command::Ablate { param, grid, tau } => {
            let param = match param {
                Param::K => AblationParam::K,
                Param::Beta => AblationParam::Beta,
            };
            commands::ablation(&cfg, &mut out, param, grid, *tau)
        }
    }?;
    for w in &outcome.warnings {
        eprintln!("dualcal: warning: {w}");
    }
    out.finish(
        cli.command.name(),
        &cfg,
        &outcome.details,
        &outcome.warnings,
        start.elapsed().as_secs_f64(),
    )
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dualcal: {e}");
            e.exit_code()
        }
    }
}
