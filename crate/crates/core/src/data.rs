//! Row-major feature storage with the observed response in a parallel column.
//!
//! Simulators also keep the latent columns `(y, u, r)`. The estimator never
//! reads them; only oracle fitting and simulation-mode evaluation do.

use crate::error::{Error, Result};

/// One observed row: features and the recorded magnitude (`0` = nothing recorded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedSample<'a> {
    pub x: &'a [f64],
    pub z: f64,
}

impl ObservedSample<'_> {
    /// Observed-occurrence indicator `1{z > 0}`.
    pub fn observed(&self) -> bool {
        self.z > 0.0
    }
}

/// One simulated row with its latent truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSample<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub u: bool,
    pub r: bool,
    pub z: f64,
}

impl LatentSample<'_> {
    pub fn is_consistent(&self) -> bool {
        let occurrence_ok = self.u == (self.y > 0.0);
        let record_ok = if self.r {
            self.z == self.y
        } else {
            self.z == 0.0
        };
        occurrence_ok && record_ok && (self.z <= 0.0 || self.z == self.y)
    }
}

/// Latent columns retained by simulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Latent {
    pub y: Vec<f64>,
    pub u: Vec<bool>,
    pub r: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    latent: Option<Latent>,
}

impl Dataset {
    /// Builds an observed-only dataset from row-major features.
    pub fn new(p: usize, x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput(
                "feature dimension must be at least 1".into(),
            ));
        }
        check_len(x.len(), z.len() * p)?;
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "features",
                sample: Some(i / p),
            });
        }
        if let Some(i) = z.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "observed response at row {i} must be finite and >= 0, got {}",
                z[i]
            )));
        }
        Ok(Self {
            p,
            x,
            z,
            latent: None,
        })
    }

    /// Builds a dataset carrying latent columns; `z` must equal `y·r` row by row.
    pub fn with_latent(p: usize, x: Vec<f64>, z: Vec<f64>, latent: Latent) -> Result<Self> {
        let mut ds = Self::new(p, x, z)?;
        let n = ds.n();
        check_len(n, latent.y.len())?;
        check_len(n, latent.u.len())?;
        check_len(n, latent.r.len())?;
        ds.latent = Some(latent);
        for i in 0..n {
            if !ds.latent_row(i).unwrap().is_consistent() {
                return Err(Error::InvalidInput(format!(
                    "row {i}: latent columns violate u = 1{{y>0}}, z = y*r"
                )));
            }
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.p)
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn sample(&self, i: usize) -> ObservedSample<'_> {
        ObservedSample {
            x: self.row(i),
            z: self.z[i],
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = ObservedSample<'_>> + '_ {
        self.rows()
            .zip(&self.z)
            .map(|(x, &z)| ObservedSample { x, z })
    }

    /// Observed-occurrence labels `v_i = 1{z_i > 0}`.
    pub fn observed_labels(&self) -> Vec<bool> {
        self.z.iter().map(|&z| z > 0.0).collect()
    }

    pub fn latent(&self) -> Option<&Latent> {
        self.latent.as_ref()
    }

    pub fn has_latent(&self) -> bool {
        self.latent.is_some()
    }

    pub fn latent_row(&self, i: usize) -> Option<LatentSample<'_>> {
        self.latent.as_ref().map(|l| LatentSample {
            x: self.row(i),
            y: l.y[i],
            u: l.u[i],
            r: l.r[i],
            z: self.z[i],
        })
    }

    /// Copy with the latent columns dropped, so downstream code can only see `(x, z)`.
    pub fn observed_only(&self) -> Dataset {
        Dataset {
            p: self.p,
            x: self.x.clone(),
            z: self.z.clone(),
            latent: None,
        }
    }

    /// Copy with a leading column of ones.
    pub fn with_intercept(&self) -> Dataset {
        let p = self.p + 1;
        let mut x = Vec::with_capacity(self.n() * p);
        for row in self.rows() {
            x.push(1.0);
            x.extend_from_slice(row);
        }
        Dataset {
            p,
            x,
            z: self.z.clone(),
            latent: self.latent.clone(),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.p);
        let mut z = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            z.push(self.z[i]);
        }
        let latent = self.latent.as_ref().map(|l| Latent {
            y: indices.iter().map(|&i| l.y[i]).collect(),
            u: indices.iter().map(|&i| l.u[i]).collect(),
            r: indices.iter().map(|&i| l.r[i]).collect(),
        });
        Dataset {
            p: self.p,
            x,
            z,
            latent,
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    crate::error::check_dims(expected, found)
}

/// Prepends a `1.0` to a feature row.
pub fn prepend_intercept(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.push(1.0);
    out.extend_from_slice(x);
    out
}
