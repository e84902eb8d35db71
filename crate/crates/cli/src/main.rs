//! `puomm`: simulate data, fit and evaluate models, run experiments.
//!
//! Exit codes: 0 on success, 1 when a command fails at runtime (a JSON error
//! object goes to stderr), 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use puomm::experiment::{run_experiment, ExperimentConfig};
use puomm::io::{self, ingest_csv, read_json, write_json, Schema, SimSidecar};
use puomm::methods::{fit_method, GridSpec, Method, MethodOptions, ModelFile, OptimizerOptions};
use puomm::metrics::{evaluate_trial, EvalMode, Truth};
use puomm::{make_datasets, Setting, SimConfig};

#[derive(Parser)]
#[command(
    name = "puomm",
    version,
    about = "Occurrence/magnitude regression with size-dependent missing labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated train/test pair with its sidecar.
    Simulate(SimulateArgs),
    /// Fit one method to a CSV file and write the model as JSON.
    Fit(FitArgs),
    /// Score a fitted model on a CSV file.
    Evaluate(EvaluateArgs),
    /// Run a multi-trial experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    CorrectSpec,
    MisspecLognormal,
    MisspecThreshold,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::CorrectSpec => Setting::CorrectSpec,
            SettingArg::MisspecLognormal => Setting::MisspecLogNormal,
            SettingArg::MisspecThreshold => Setting::MisspecThreshold,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "correct-spec")]
    setting: SettingArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    n_test: usize,
    /// True detection rate (correct-spec and misspec-lognormal).
    #[arg(long, default_value_t = 0.24)]
    lambda_eps: f64,
    /// Recording threshold (misspec-threshold).
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// Output directory for train.csv, test.csv and sim.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Detection rate for pu_omm_true_lambda.
    #[arg(long)]
    lambda_eps: Option<f64>,
    /// Prepend a column of ones to the features.
    #[arg(long)]
    intercept: bool,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizerArgs {
    /// Radius of the parameter ball [default: 5√p].
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 20)]
    grid_size: usize,
    #[arg(long, default_value_t = 0.02)]
    grid_lo: f64,
    #[arg(long, default_value_t = 50.0)]
    grid_hi: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Latent columns present; score occurrence on `y > 0`.
    Simulation,
    /// Score occurrence on `z > 0`.
    RealData,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "simulation")]
    mode: ModeArg,
    /// Simulation sidecar with the true coefficients.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Metrics JSON to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!(
            "unknown method {s:?} (expected one of {})",
            names.join(", ")
        )
    })
}

fn simulate(args: SimulateArgs) -> puomm::Result<serde_json::Value> {
    let mut cfg = SimConfig::new(args.setting.into(), args.n, args.p, args.seed);
    cfg.n_test = args.n_test;
    cfg.lambda_eps_true = args.lambda_eps;
    cfg.tau = args.tau;
    cfg.rho = args.rho;
    let out = make_datasets(&cfg)?;
    io::write_sim_output(&cfg, &out, &args.out)?;
    let (train, test, sidecar) = io::sim_paths(&args.out);
    Ok(json!({ "train": train, "test": test, "sidecar": sidecar }))
}

fn load(path: &Path, method: Method, intercept: bool) -> puomm::Result<puomm::Dataset> {
    // only the oracle may read the latent columns
    let schema = if method.needs_latent() {
        Schema::Simulated
    } else {
        Schema::ObservedOnly
    };
    let data = ingest_csv(path, schema)?;
    Ok(if intercept {
        data.with_intercept()
    } else {
        data
    })
}

fn fit(args: FitArgs) -> puomm::Result<serde_json::Value> {
    let data = load(&args.data, args.method, args.intercept)?;
    let opts = MethodOptions {
        optimizer: OptimizerOptions {
            radius: args.opt.radius,
            tol: args.opt.tol,
            max_iter: args.opt.max_iter,
            ..Default::default()
        },
        grid: GridSpec {
            size: args.opt.grid_size,
            lo: args.opt.grid_lo,
            hi: args.opt.grid_hi,
        },
        true_lambda: args.lambda_eps,
        ..Default::default()
    };
    let model = fit_method(args.method, &data, &opts)?;
    let file = ModelFile {
        method: args.method,
        intercept: args.intercept,
        model,
    };
    write_json(&file, &args.out)?;
    Ok(json!({ "model": args.out }))
}

fn evaluate(args: EvaluateArgs) -> puomm::Result<serde_json::Value> {
    let file: ModelFile = read_json(&args.model)?;
    let mode = match args.mode {
        ModeArg::Simulation => EvalMode::Simulation,
        ModeArg::RealData => EvalMode::RealData,
    };
    let schema = match mode {
        EvalMode::Simulation => Schema::Simulated,
        EvalMode::RealData => Schema::ObservedOnly,
    };
    let mut data = ingest_csv(&args.data, schema)?;
    if file.intercept {
        data = data.with_intercept();
    }
    let sidecar: Option<SimSidecar> = args.truth.as_deref().map(read_json).transpose()?;
    let truth = sidecar.as_ref().map(|s| Truth {
        beta0: &s.beta0,
        theta0: &s.theta0,
    });
    let reports = evaluate_trial(
        &[(file.method.name(), file.model.as_predictor())],
        &data,
        truth,
        mode,
        0,
    )?;
    let value = serde_json::to_value(&reports[0])?;
    if let Some(out) = &args.out {
        write_json(&value, out)?;
    }
    Ok(value)
}

fn experiment(args: ExperimentArgs) -> puomm::Result<serde_json::Value> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let out = run_experiment(&cfg)?;
    let failed = out.rows.iter().filter(|r| r.value.is_none()).count();
    Ok(json!({
        "results": out.results_path,
        "summary": out.summary_path,
        "rows": out.rows.len(),
        "failed_rows": failed,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
            );
            ExitCode::from(1)
        }
    }
}
