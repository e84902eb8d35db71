use std::collections::HashMap;
use std::fs;
use std::path::Path;

use puomm::experiment::{
    run_experiment, ExperimentConfig, Mode, RealDataSpec, REAL_METRICS, SIM_METRICS, SPLITS_FILE,
};
use puomm::io::{ingest_csv, write_dataset_csv, Schema};
use puomm::methods::{fit_method, Method, MethodOptions};
use puomm::{make_datasets, Dataset, Setting, SimConfig};

fn sim_config(
    out: &Path,
    setting: Setting,
    n_values: Vec<usize>,
    trials: usize,
) -> ExperimentConfig {
    let mut s = SimConfig::new(setting, 300, 4, 0);
    s.n_test = 2000;
    ExperimentConfig {
        mode: Mode::Simulation,
        settings: vec![s],
        data: None,
        methods: Method::ALL.to_vec(),
        n_values,
        trials,
        base_seed: 40,
        output_dir: out.to_path_buf(),
        options: MethodOptions::default(),
    }
}

/// An observed-only CSV drawn from the correctly specified model.
fn write_observed_csv(path: &Path, n: usize, p: usize) -> Dataset {
    let mut cfg = SimConfig::new(Setting::CorrectSpec, n, p, 77);
    cfg.n_test = 1;
    let data = make_datasets(&cfg).unwrap().train.observed_only();
    write_dataset_csv(&data, path).unwrap();
    data
}

fn read_rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn summary_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(dir.path(), Setting::CorrectSpec, vec![300, 600], 2);
    let out = run_experiment(&cfg).unwrap();
    let cells = cfg.settings.len() * cfg.n_values.len() * cfg.methods.len() * SIM_METRICS.len();
    assert_eq!(out.summary.len(), cells);
    assert_eq!(out.rows.len(), cells * cfg.trials);
    assert!(
        out.rows.iter().all(|r| r.status == "ok"),
        "{:?}",
        out.rows.iter().find(|r| r.status != "ok")
    );
    assert_eq!(read_rows(&out.summary_path).len(), cells);
}

#[test]
fn summary_recomputes_from_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(dir.path(), Setting::CorrectSpec, vec![], 3);
    let out = run_experiment(&cfg).unwrap();
    let mut cells: HashMap<(String, String, String, String), Vec<f64>> = HashMap::new();
    for r in read_rows(&out.results_path) {
        cells
            .entry((
                r["setting"].clone(),
                r["n"].clone(),
                r["method"].clone(),
                r["metric"].clone(),
            ))
            .or_default()
            .push(r["value"].parse().unwrap());
    }
    let summary = read_rows(&out.summary_path);
    assert_eq!(summary.len(), cells.len());
    for s in summary {
        let v = &cells[&(
            s["setting"].clone(),
            s["n"].clone(),
            s["method"].clone(),
            s["metric"].clone(),
        )];
        let b = v.len() as f64;
        let mean = v.iter().sum::<f64>() / b;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt();
        let got_mean: f64 = s["mean"].parse().unwrap();
        let got_se: f64 = s["se"].parse().unwrap();
        assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((got_se - sd / b.sqrt()).abs() <= 1e-12 * got_se.abs().max(1e-300));
        assert_eq!(s["count"], "3");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first =
        run_experiment(&sim_config(a.path(), Setting::MisspecLogNormal, vec![], 2)).unwrap();
    let second =
        run_experiment(&sim_config(b.path(), Setting::MisspecLogNormal, vec![], 2)).unwrap();
    for (x, y) in [
        (&first.results_path, &second.results_path),
        (&first.summary_path, &second.summary_path),
    ] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn real_data_splits_are_ninety_ten() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_observed_csv(&csv, 401, 3);
    let cfg = ExperimentConfig {
        mode: Mode::RealData,
        settings: vec![],
        data: Some(RealDataSpec {
            path: csv,
            split_fraction: 0.9,
            intercept: true,
        }),
        methods: vec![
            Method::PuOmm,
            Method::LogisticGamma,
            Method::LogisticLognormal,
        ],
        n_values: vec![],
        trials: 10,
        base_seed: 3,
        output_dir: dir.path().join("out"),
        options: MethodOptions::default(),
    };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.splits.len(), 10);
    assert!(out
        .splits
        .iter()
        .all(|s| s.n_train == 361 && s.n_test == 40));
    let written = read_rows(&dir.path().join("out").join(SPLITS_FILE));
    assert_eq!(written.len(), 10);
    assert!(written
        .iter()
        .all(|r| r["n_train"] == "361" && r["n_test"] == "40"));
    assert_eq!(out.summary.len(), 3 * REAL_METRICS.len());
    assert!(out.rows.iter().all(|r| r.status == "ok"));
}

#[test]
fn failures_are_recorded_and_the_run_continues() {
    // the threshold setting has no true detection rate to hand to pu_omm_true_lambda
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sim_config(dir.path(), Setting::MisspecThreshold, vec![], 1);
    cfg.methods = vec![Method::PuOmmTrueLambda, Method::LogisticGamma];
    let out = run_experiment(&cfg).unwrap();
    let (failed, ok): (Vec<_>, Vec<_>) = out.rows.iter().partition(|r| r.value.is_none());
    assert_eq!(failed.len(), SIM_METRICS.len());
    assert!(failed
        .iter()
        .all(|r| r.method == Method::PuOmmTrueLambda && r.status.starts_with("error")));
    assert!(ok
        .iter()
        .all(|r| r.method == Method::LogisticGamma && r.status == "ok"));
    let text = fs::read_to_string(&out.results_path).unwrap();
    assert!(text
        .lines()
        .any(|l| l.contains("pu_omm_true_lambda") && l.contains("error")));
}

#[test]
fn observed_only_files_serve_every_non_oracle_method() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("obs.csv");
    write_observed_csv(&csv, 500, 3);
    let data = ingest_csv(&csv, Schema::ObservedOnly).unwrap();
    assert!(!data.has_latent());
    let opts = MethodOptions {
        true_lambda: Some(0.24),
        ..Default::default()
    };
    for m in Method::ALL {
        let fitted = fit_method(m, &data, &opts);
        assert_eq!(fitted.is_ok(), !m.needs_latent(), "{m}");
    }
    assert!(ingest_csv(&csv, Schema::Simulated).is_err());
}

#[test]
fn oracle_is_rejected_in_real_data_mode() {
    let cfg = ExperimentConfig {
        mode: Mode::RealData,
        settings: vec![],
        data: Some(RealDataSpec {
            path: "unused.csv".into(),
            split_fraction: 0.9,
            intercept: true,
        }),
        methods: vec![Method::Oracle],
        n_values: vec![],
        trials: 1,
        base_seed: 0,
        output_dir: "unused".into(),
        options: MethodOptions::default(),
    };
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn wildfire_sized_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("large.csv");
    let written = write_observed_csv(&csv, 15_846, 43);
    let data = ingest_csv(&csv, Schema::ObservedOnly).unwrap();
    assert_eq!((data.n(), data.p()), (15_846, 43));
    assert_eq!(data, written);
}
