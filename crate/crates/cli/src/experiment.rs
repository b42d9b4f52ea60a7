//! Synthetic sweeps: for every sweep value and trial, generate a truth, sample
//! a corpus, fit, and score. Trials run on a worker pool; each owns an RNG
//! substream derived from `(sweep_index, trial)`, and results are sorted before
//! they are written, so output does not depend on scheduling.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spoc_core::metrics::{perm_min_error, ErrorNorm};
use spoc_core::spoc::{fit_adaptive, fit_w};
use spoc_core::synth::{generate_truth, sample_corpus, AnchorWeighting, TopicPrior, TruthSpec};
use spoc_core::{RngSeed, SpocOptions};

use crate::error::{CliError, Result};

pub const CSV_HEADER: &str = "run_id,sweep_var,sweep_value,trial,estimator,metric,value,seconds,reason";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "n")]
    Docs,
    #[serde(rename = "p")]
    Words,
    #[serde(rename = "N")]
    DocLength,
    #[serde(rename = "K")]
    Topics,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            Self::Docs => "n",
            Self::Words => "p",
            Self::DocLength => "N",
            Self::Topics => "K",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Estimator {
    Spoc,
    SpocPreconditioned,
    SpocAdaptive,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Self::Spoc => "spoc",
            Self::SpocPreconditioned => "spoc_preconditioned",
            Self::SpocAdaptive => "spoc_adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Permutation-minimized errors of `Ŵ`.
    WFro,
    WL1,
    WL1Inf,
    /// Permutation-minimized Frobenius error of `Â`.
    AFro,
    /// Number of topics used by the fit.
    KHat,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Self::WFro => "w_fro",
            Self::WL1 => "w_l1",
            Self::WL1Inf => "w_l1_inf",
            Self::AFro => "a_fro",
            Self::KHat => "k_hat",
        }
    }
}

/// Values held fixed while one of them is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub n_words: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub prior: TopicPrior,
    #[serde(default)]
    pub anchor_weighting: AnchorWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<usize>,
    pub fixed: FixedParams,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub estimator: Estimator,
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub clip: bool,
    #[serde(default = "default_threshold")]
    pub threshold_const: f64,
}

fn default_trials() -> usize {
    10
}

fn default_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Error against n: n ∈ {250, 500, 1000, 2000}, p = 5000, N = 200.
    Fig1,
    /// Error against N: N ∈ {100, 200, 400, 800}, n = 1000, p = 5000.
    Fig2,
    /// Error against p: p ∈ {1000, 2000, 5000, 10000}, n = 1000, N = 200.
    Fig3,
    /// Error against K with uniform topic weights, n = 1000, p = 5000, N = 5000.
    Fig4,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let dirichlet = TopicPrior::Dirichlet(vec![0.1, 0.15, 0.2]);
        let (sweep_variable, sweep_values, fixed) = match preset {
            Preset::Fig1 => (
                SweepVariable::Docs,
                vec![250, 500, 1000, 2000],
                FixedParams::new(1000, 5000, 200, 3, dirichlet),
            ),
            Preset::Fig2 => (
                SweepVariable::DocLength,
                vec![100, 200, 400, 800],
                FixedParams::new(1000, 5000, 200, 3, dirichlet),
            ),
            Preset::Fig3 => (
                SweepVariable::Words,
                vec![1000, 2000, 5000, 10000],
                FixedParams::new(1000, 5000, 200, 3, dirichlet),
            ),
            Preset::Fig4 => (
                SweepVariable::Topics,
                vec![2, 4, 6, 8, 10],
                FixedParams::new(1000, 5000, 5000, 3, TopicPrior::Uniform),
            ),
        };
        Self {
            sweep_variable,
            sweep_values,
            fixed,
            trials: default_trials(),
            seed: 0,
            estimator: Estimator::Spoc,
            metrics: vec![Metric::WFro],
            clip: false,
            threshold_const: default_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(CliError::config("sweep_values is empty"));
        }
        if self.sweep_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("sweep_values must be strictly increasing"));
        }
        if self.trials == 0 {
            return Err(CliError::config("trials must be at least 1"));
        }
        if self.metrics.is_empty() {
            return Err(CliError::config("metrics is empty"));
        }
        if !(self.threshold_const > 0.0 && self.threshold_const.is_finite()) {
            return Err(CliError::config("threshold_const must be positive"));
        }
        for &v in &self.sweep_values {
            let spec = self.truth_spec(v);
            if spec.k < 2 || spec.k > spec.n.min(spec.p) {
                return Err(CliError::config(format!(
                    "K = {} must lie in 2..=min(n, p) = {} at sweep value {v}",
                    spec.k,
                    spec.n.min(spec.p)
                )));
            }
            if let TopicPrior::Dirichlet(alpha) = &spec.prior {
                if alpha.len() != spec.k {
                    return Err(CliError::config(format!(
                        "Dirichlet prior has {} parameters but K = {} at sweep value {v}",
                        alpha.len(),
                        spec.k
                    )));
                }
            }
            if self.n_words(v) == 0 {
                return Err(CliError::config("N must be at least 1"));
            }
        }
        Ok(())
    }

    fn truth_spec(&self, value: usize) -> TruthSpec {
        let f = &self.fixed;
        let mut spec = TruthSpec {
            n: f.n,
            k: f.k,
            p: f.p,
            prior: f.prior.clone(),
            anchor_weighting: f.anchor_weighting,
        };
        match self.sweep_variable {
            SweepVariable::Docs => spec.n = value,
            SweepVariable::Words => spec.p = value,
            SweepVariable::Topics => spec.k = value,
            SweepVariable::DocLength => {}
        }
        spec
    }

    fn n_words(&self, value: usize) -> usize {
        match self.sweep_variable {
            SweepVariable::DocLength => value,
            _ => self.fixed.n_words,
        }
    }

    /// Stable identifier: FNV-1a over the canonical JSON of the config.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        });
        format!("{hash:016x}")
    }

    fn options(&self) -> SpocOptions {
        SpocOptions {
            preconditioned: self.estimator != Estimator::Spoc,
            clip_to_simplex: self.clip,
            threshold_const: self.threshold_const,
            ..SpocOptions::default()
        }
    }
}

impl FixedParams {
    pub fn new(n: usize, p: usize, n_words: usize, k: usize, prior: TopicPrior) -> Self {
        Self {
            n,
            p,
            n_words,
            k,
            prior,
            anchor_weighting: AnchorWeighting::Uniform,
        }
    }
}

/// Substream for one trial; distinct `(sweep_index, trial)` pairs never collide.
pub fn substream(sweep_index: usize, trial: usize) -> u64 {
    ((sweep_index as u64) << 32) | trial as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_index: usize,
    pub sweep_value: usize,
    pub trial: usize,
    /// One entry per configured metric, in config order; `None` on failure.
    pub values: Vec<Option<f64>>,
    pub seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_value: usize,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub succeeded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<PointSummary>,
}

/// Runs every `(sweep value, trial)` pair on a pool of `jobs` workers
/// (`None` = rayon's default).
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunRecord> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> = (0..config.sweep_values.len())
        .flat_map(|s| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let mut trials: Vec<TrialRecord> =
        pool.install(|| tasks.par_iter().map(|&(s, t)| run_trial(config, s, t)).collect());
    trials.sort_by_key(|r| (r.sweep_index, r.trial));

    let summary = summarize(config, &trials);
    Ok(RunRecord {
        run_id: config.run_id(),
        config: config.clone(),
        trials,
        summary,
    })
}

fn run_trial(config: &ExperimentConfig, sweep_index: usize, trial: usize) -> TrialRecord {
    let value = config.sweep_values[sweep_index];
    let start = Instant::now();
    let outcome = score_trial(config, value, sweep_index, trial);
    let seconds = start.elapsed().as_secs_f64();
    let (values, failure) = match outcome {
        Ok(v) => (v.into_iter().map(Some).collect(), None),
        Err(e) => {
            log::warn!("sweep value {value}, trial {trial} failed: {e}");
            (vec![None; config.metrics.len()], Some(e.to_string()))
        }
    };
    TrialRecord {
        sweep_index,
        sweep_value: value,
        trial,
        values,
        seconds,
        failure,
    }
}

fn score_trial(config: &ExperimentConfig, value: usize, sweep_index: usize, trial: usize) -> Result<Vec<f64>> {
    let spec = config.truth_spec(value);
    let n_words = config.n_words(value);
    let mut rng = RngSeed::new(config.seed, substream(sweep_index, trial)).rng();
    let truth = generate_truth(&spec, &mut rng)?;
    let corpus = sample_corpus(&truth, n_words, &mut rng)?;
    let opts = config.options();
    let est = match config.estimator {
        Estimator::SpocAdaptive => fit_adaptive(&corpus.x, n_words, &opts)?,
        _ => fit_w(&corpus.x, spec.k, &opts)?,
    };

    let mismatch = est.k_used != spec.k;
    config
        .metrics
        .iter()
        .map(|m| -> Result<f64> {
            if mismatch && *m != Metric::KHat {
                return Err(CliError::config(format!(
                    "estimated {} topics instead of {}; errors are undefined",
                    est.k_used, spec.k
                )));
            }
            Ok(match m {
                Metric::WFro => perm_min_error(&est.w_hat, &truth.w, ErrorNorm::Fro)?.fro,
                Metric::WL1 => perm_min_error(&est.w_hat, &truth.w, ErrorNorm::L1)?.l1,
                Metric::WL1Inf => perm_min_error(&est.w_hat, &truth.w, ErrorNorm::L1Inf)?.l1_inf,
                Metric::AFro => perm_min_error(&est.a_hat.transpose(), &truth.a.transpose(), ErrorNorm::Fro)?.fro,
                Metric::KHat => est.k_used as f64,
            })
        })
        .collect()
}

fn summarize(config: &ExperimentConfig, trials: &[TrialRecord]) -> Vec<PointSummary> {
    let mut out = Vec::new();
    for (s, &value) in config.sweep_values.iter().enumerate() {
        for (m, &metric) in config.metrics.iter().enumerate() {
            let vals: Vec<f64> = trials
                .iter()
                .filter(|r| r.sweep_index == s)
                .filter_map(|r| r.values[m])
                .collect();
            let count = vals.len();
            let mean = (count > 0).then(|| vals.iter().sum::<f64>() / count as f64);
            let std_dev = mean.filter(|_| count > 1).map(|mu| {
                (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            });
            out.push(PointSummary {
                sweep_value: value,
                metric,
                mean,
                std_dev,
                succeeded: count,
            });
        }
    }
    out
}

/// Long-format CSV, one line per (trial, metric). Wall-clock seconds are only
/// written when `timing` is set, since they would break byte-for-byte
/// reproducibility.
pub fn to_csv(record: &RunRecord, timing: bool) -> String {
    let cfg = &record.config;
    let mut out = String::with_capacity(64 * record.trials.len() * cfg.metrics.len() + 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &record.trials {
        for (m, metric) in cfg.metrics.iter().enumerate() {
            let value = r.values[m].map_or_else(|| "NA".to_string(), |v| v.to_string());
            let seconds = if timing { format!("{:.6}", r.seconds) } else { "NA".to_string() };
            let reason = r.failure.as_deref().map(csv_field).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                record.run_id,
                cfg.sweep_variable.label(),
                r.sweep_value,
                r.trial,
                cfg.estimator.label(),
                metric.label(),
                value,
                seconds,
                reason
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
