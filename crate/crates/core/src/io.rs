//! CSV and JSON file formats.
//!
//! Dataset CSVs have a header row. Feature columns are named `x_1 .. x_p`,
//! followed by `z`; simulated files add the latent `y`, `u`, `r` columns
//! (`u`, `r` written as `0`/`1`). Floats are written in shortest round-trip
//! form, so a write/read cycle reproduces every value bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Latent};
use crate::error::{Error, Result};
use crate::simulate::{SimConfig, SimOutput};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SIDECAR_FILE: &str = "sim.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    /// `x_*` and `z` only.
    ObservedOnly,
    /// `x_*`, `z`, `y`, `u`, `r`.
    Simulated,
}

/// Sidecar describing a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSidecar {
    pub config: SimConfig,
    pub beta0: Vec<f64>,
    pub theta0: Vec<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Writes `data` as CSV; latent columns are included when present.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut line = String::new();
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (1..=data.p())
        .map(|j| format!("x_{j}"))
        .chain(["z".to_string()])
        .chain(
            if data.has_latent() {
                &["y", "u", "r"][..]
            } else {
                &[]
            }
            .iter()
            .map(|c| c.to_string()),
        )
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.n() {
        line.clear();
        for v in data.row(i) {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&data.z()[i].to_string());
        if let Some(l) = data.latent() {
            line.push_str(&format!(
                ",{},{},{}",
                l.y[i],
                u8::from(l.u[i]),
                u8::from(l.r[i])
            ));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        csv_error(
            path,
            line,
            format!("column {column}: non-numeric value {cell:?}"),
        )
    })?;
    if !v.is_finite() {
        return Err(csv_error(
            path,
            line,
            format!("column {column}: non-finite value"),
        ));
    }
    Ok(v)
}

fn parse_flag(path: &Path, line: u64, column: &str, cell: &str) -> Result<bool> {
    match parse_cell(path, line, column, cell)? {
        0.0 => Ok(false),
        1.0 => Ok(true),
        v => Err(csv_error(
            path,
            line,
            format!("column {column}: expected 0 or 1, got {v}"),
        )),
    }
}

/// Reads a dataset CSV. Feature columns are those whose name starts with
/// `x_`, in file order. Rows are validated with their file line numbers.
pub fn ingest_csv(path: &Path, schema: Schema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 1, e.to_string()))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| csv_error(path, 1, format!("missing column {name:?}")))
    };
    let feature_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("x_"))
        .map(|(i, _)| i)
        .collect();
    if feature_cols.is_empty() {
        return Err(csv_error(path, 1, "no feature columns (x_*)"));
    }
    let z_col = find("z")?;
    let latent_cols = match schema {
        Schema::Simulated => Some((find("y")?, find("u")?, find("r")?)),
        Schema::ObservedOnly => None,
    };

    let p = feature_cols.len();
    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut latent = Latent::default();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| record.get(i).unwrap_or("");
        for &c in &feature_cols {
            x.push(parse_cell(path, line, &headers[c], cell(c))?);
        }
        let zi = parse_cell(path, line, "z", cell(z_col))?;
        if zi < 0.0 {
            return Err(csv_error(
                path,
                line,
                format!("column z: negative value {zi}"),
            ));
        }
        z.push(zi);
        if let Some((yc, uc, rc)) = latent_cols {
            let y = parse_cell(path, line, "y", cell(yc))?;
            let u = parse_flag(path, line, "u", cell(uc))?;
            let r = parse_flag(path, line, "r", cell(rc))?;
            let row = crate::data::LatentSample {
                x: &[],
                y,
                u,
                r,
                z: zi,
            };
            if !(y >= 0.0 && row.is_consistent()) {
                return Err(csv_error(
                    path,
                    line,
                    "latent columns violate u = 1{y>0}, z = y*r",
                ));
            }
            latent.y.push(y);
            latent.u.push(u);
            latent.r.push(r);
        }
    }
    match schema {
        Schema::Simulated => Dataset::with_latent(p, x, z, latent),
        Schema::ObservedOnly => Dataset::new(p, x, z),
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Paths of the three files written by [`write_sim_output`].
pub fn sim_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(TRAIN_FILE),
        dir.join(TEST_FILE),
        dir.join(SIDECAR_FILE),
    )
}

/// Writes `train.csv`, `test.csv` and the `sim.json` sidecar into `dir`.
pub fn write_sim_output(cfg: &SimConfig, out: &SimOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, test, sidecar) = sim_paths(dir);
    write_dataset_csv(&out.train, &train)?;
    write_dataset_csv(&out.test, &test)?;
    write_json(
        &SimSidecar {
            config: cfg.clone(),
            beta0: out.beta0.clone(),
            theta0: out.theta0.clone(),
        },
        &sidecar,
    )
}

pub fn read_sim_output(dir: &Path) -> Result<(SimConfig, SimOutput)> {
    let (train, test, sidecar) = sim_paths(dir);
    let meta: SimSidecar = read_json(&sidecar)?;
    Ok((
        meta.config,
        SimOutput {
            train: ingest_csv(&train, Schema::Simulated)?,
            test: ingest_csv(&test, Schema::Simulated)?,
            beta0: meta.beta0,
            theta0: meta.theta0,
        },
    ))
}
