//! Multi-trial experiments: simulation sweeps and repeated train/test splits.
//!
//! Output is a long-format `results.csv` (one row per setting, n, trial,
//! method and metric) and a `summary.csv` with the mean and standard error
//! of every cell. Real-data runs also write `splits.csv`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::{ingest_csv, Schema};
use crate::methods::{fit_method, FittedModel, Method, MethodOptions};
use crate::metrics::{evaluate_trial, EvalMode, Predictor, Truth};
use crate::simulate::{make_datasets, stream_rng, Setting, SimConfig, Stream};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SPLITS_FILE: &str = "splits.csv";

pub const SIM_METRICS: [&str; 7] = [
    "rmse_beta",
    "rmse_theta",
    "brier",
    "misclassification",
    "mad",
    "rmse_pred",
    "smape",
];
pub const REAL_METRICS: [&str; 5] = ["brier", "misclassification", "mad", "rmse_pred", "smape"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulation,
    RealData,
}

fn default_split() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataSpec {
    /// Observed-only CSV (`x_*`, `z`).
    pub path: PathBuf,
    /// Share of rows assigned to training.
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Prepend a column of ones to the features.
    #[serde(default = "default_true")]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub settings: Vec<SimConfig>,
    #[serde(default)]
    pub data: Option<RealDataSpec>,
    pub methods: Vec<Method>,
    /// Training sizes to sweep; empty means each setting's own `n`.
    #[serde(default)]
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub options: MethodOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("no methods given");
        }
        if self.n_values.contains(&0) {
            return bad("n_values must be positive");
        }
        match self.mode {
            Mode::Simulation => {
                if self.settings.is_empty() {
                    return bad("simulation mode needs at least one setting");
                }
                for s in &self.settings {
                    s.validate()?;
                }
            }
            Mode::RealData => {
                let Some(data) = &self.data else {
                    return bad("real_data mode needs a data section");
                };
                let f = data.split_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return bad("split_fraction must lie in (0, 1)");
                }
                if self.methods.iter().any(|m| m.needs_latent()) {
                    return bad("the oracle method needs simulation mode");
                }
            }
        }
        Ok(())
    }
}

/// One line of `results.csv`. `value` is `None` when the fit or evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub setting: String,
    pub n: usize,
    pub trial: usize,
    pub method: Method,
    pub metric: &'static str,
    pub value: Option<f64>,
    pub status: String,
}

impl ResultRow {
    pub const HEADER: [&'static str; 7] = [
        "setting", "n", "trial", "method", "metric", "value", "status",
    ];

    fn record(&self) -> [String; 7] {
        [
            self.setting.clone(),
            self.n.to_string(),
            self.trial.to_string(),
            self.method.name().to_string(),
            self.metric.to_string(),
            self.value.map(|v| v.to_string()).unwrap_or_default(),
            self.status.clone(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub setting: String,
    pub n: usize,
    pub method: Method,
    pub metric: &'static str,
    pub mean: Option<f64>,
    /// `sd / √count` with the `count - 1` sample deviation; `None` below two values.
    pub se: Option<f64>,
    /// Trials that produced a value.
    pub count: usize,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 7] =
        ["setting", "n", "method", "metric", "mean", "se", "count"];

    fn record(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.setting.clone(),
            self.n.to_string(),
            self.method.name().to_string(),
            self.metric.to_string(),
            opt(self.mean),
            opt(self.se),
            self.count.to_string(),
        ]
    }
}

/// Train/test sizes of one real-data trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub trial: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub splits: Vec<SplitSizes>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
}

/// `⌈fraction · n⌉`, ignoring floating-point noise just above an integer.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let t = fraction * n as f64;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

/// Random partition of `0..n` into a training set of [`train_size`] rows and the rest.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = train_size(n, fraction);
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidInput(format!(
            "split of {n} rows at fraction {fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

struct Trial {
    setting: String,
    n: usize,
    trial: usize,
    seed: u64,
    kind: TrialKind,
}

enum TrialKind {
    Sim(SimConfig),
    Real,
}

fn failed_rows(
    setting: &str,
    n: usize,
    trial: usize,
    method: Method,
    metrics: &[&'static str],
    err: &Error,
) -> Vec<ResultRow> {
    metrics
        .iter()
        .map(|&metric| ResultRow {
            setting: setting.to_string(),
            n,
            trial,
            method,
            metric,
            value: None,
            status: format!("error: {err}"),
        })
        .collect()
}

/// Fits and scores every method on one train/test pair.
fn score_methods(
    t: &Trial,
    methods: &[Method],
    opts: &MethodOptions,
    train: &Dataset,
    test: &Dataset,
    truth: Option<Truth<'_>>,
    mode: EvalMode,
    metrics: &[&'static str],
) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for &method in methods {
        let scored = fit_method(method, train, opts).and_then(|model: FittedModel| {
            let pred: &dyn Predictor = model.as_predictor();
            let mut report = evaluate_trial(&[(method.name(), pred)], test, truth, mode, t.trial)?;
            Ok(report.remove(0))
        });
        match scored {
            Ok(report) => {
                let values: HashMap<&str, f64> = report.metric_values().into_iter().collect();
                for &metric in metrics {
                    let value = values.get(metric).copied();
                    rows.push(ResultRow {
                        setting: t.setting.clone(),
                        n: t.n,
                        trial: t.trial,
                        method,
                        metric,
                        value,
                        status: if value.is_some() { "ok" } else { "missing" }.to_string(),
                    });
                }
            }
            Err(e) => rows.extend(failed_rows(&t.setting, t.n, t.trial, method, metrics, &e)),
        }
    }
    rows
}

fn run_sim_trial(cfg: &ExperimentConfig, t: &Trial, sim: &SimConfig) -> Vec<ResultRow> {
    let out = match make_datasets(sim) {
        Ok(o) => o,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .flat_map(|&m| failed_rows(&t.setting, t.n, t.trial, m, &SIM_METRICS, &e))
                .collect()
        }
    };
    let mut opts = cfg.options;
    if opts.true_lambda.is_none() && sim.setting != Setting::MisspecThreshold {
        opts.true_lambda = Some(sim.lambda_eps_true);
    }
    let truth = Truth {
        beta0: &out.beta0,
        theta0: &out.theta0,
    };
    score_methods(
        t,
        &cfg.methods,
        &opts,
        &out.train,
        &out.test,
        Some(truth),
        EvalMode::Simulation,
        &SIM_METRICS,
    )
}

fn run_real_trial(
    cfg: &ExperimentConfig,
    t: &Trial,
    data: &Dataset,
    fraction: f64,
) -> (Vec<ResultRow>, Option<SplitSizes>) {
    match split_indices(data.n(), fraction, t.seed) {
        Ok((train_idx, test_idx)) => {
            let sizes = SplitSizes {
                trial: t.trial,
                n_train: train_idx.len(),
                n_test: test_idx.len(),
            };
            let rows = score_methods(
                t,
                &cfg.methods,
                &cfg.options,
                &data.subset(&train_idx),
                &data.subset(&test_idx),
                None,
                EvalMode::RealData,
                &REAL_METRICS,
            );
            (rows, Some(sizes))
        }
        Err(e) => {
            let rows = cfg
                .methods
                .iter()
                .flat_map(|&m| failed_rows(&t.setting, t.n, t.trial, m, &REAL_METRICS, &e))
                .collect();
            (rows, None)
        }
    }
}

/// Per-cell mean and standard error, cells in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize, Method, &'static str)> = Vec::new();
    let mut values: HashMap<(String, usize, Method, &'static str), Vec<f64>> = HashMap::new();
    for r in rows {
        let key = (r.setting.clone(), r.n, r.method, r.metric);
        let entry = values.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if let Some(v) = r.value {
            entry.push(v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let count = v.len();
            let mean = (count > 0).then(|| v.iter().sum::<f64>() / count as f64);
            let se = mean.filter(|_| count > 1).map(|m| {
                let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            });
            let (setting, n, method, metric) = key;
            SummaryRow {
                setting,
                n,
                method,
                metric,
                mean,
                se,
                count,
            }
        })
        .collect()
}

fn write_csv<const K: usize>(
    path: &Path,
    header: [&str; K],
    records: impl Iterator<Item = [String; K]>,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every trial of `cfg` and writes the CSV outputs into `cfg.output_dir`.
///
/// A failed fit or evaluation yields rows with an empty value and an
/// `error: ...` status; the run carries on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut trials = Vec::new();
    let mut real: Option<(Dataset, f64)> = None;
    match cfg.mode {
        Mode::Simulation => {
            for s in &cfg.settings {
                let ns = if cfg.n_values.is_empty() {
                    vec![s.n]
                } else {
                    cfg.n_values.clone()
                };
                for n in ns {
                    for trial in 0..cfg.trials {
                        let seed = cfg.base_seed.wrapping_add(trial as u64);
                        let sim = SimConfig {
                            n,
                            seed,
                            ..s.clone()
                        };
                        trials.push(Trial {
                            setting: s.setting.name().to_string(),
                            n,
                            trial,
                            seed,
                            kind: TrialKind::Sim(sim),
                        });
                    }
                }
            }
        }
        Mode::RealData => {
            let spec = cfg.data.as_ref().expect("validated");
            let mut data = ingest_csv(&spec.path, Schema::ObservedOnly)?;
            if spec.intercept {
                data = data.with_intercept();
            }
            for trial in 0..cfg.trials {
                trials.push(Trial {
                    setting: "real_data".to_string(),
                    n: data.n(),
                    trial,
                    seed: cfg.base_seed.wrapping_add(trial as u64),
                    kind: TrialKind::Real,
                });
            }
            real = Some((data, spec.split_fraction));
        }
    }

    let per_trial: Vec<(Vec<ResultRow>, Option<SplitSizes>)> = trials
        .par_iter()
        .map(|t| match &t.kind {
            TrialKind::Sim(sim) => (run_sim_trial(cfg, t, sim), None),
            TrialKind::Real => {
                let (data, fraction) = real.as_ref().expect("loaded above");
                run_real_trial(cfg, t, data, *fraction)
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut splits = Vec::new();
    for (r, s) in per_trial {
        rows.extend(r);
        splits.extend(s);
    }
    let summary = summarize(&rows);

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results_path = dir.join(RESULTS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_csv(
        &results_path,
        ResultRow::HEADER,
        rows.iter().map(ResultRow::record),
    )?;
    write_csv(
        &summary_path,
        SummaryRow::HEADER,
        summary.iter().map(SummaryRow::record),
    )?;
    if cfg.mode == Mode::RealData {
        write_csv(
            &dir.join(SPLITS_FILE),
            ["trial", "n_train", "n_test"],
            splits.iter().map(|s| {
                [
                    s.trial.to_string(),
                    s.n_train.to_string(),
                    s.n_test.to_string(),
                ]
            }),
        )?;
    }
    Ok(ExperimentOutput {
        rows,
        summary,
        splits,
        results_path,
        summary_path,
    })
}
