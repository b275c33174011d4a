use serde::{Deserialize, Serialize};

use super::svm::Matrix;
use crate::error::{Error, Result};

/// Per-column z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: Matrix,
    pub scaler: Scaler,
    /// Zero-variance columns, passed through centred with scale 1.
    pub constant_columns: Vec<usize>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Result<(Scaler, Vec<usize>)> {
        if x.rows < 2 {
            return Err(Error::InsufficientData(format!(
                "standardization needs 2 rows, got {}",
                x.rows
            )));
        }
        let n = x.rows as f64;
        let mut means = vec![0.0; x.cols];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; x.cols];
        for r in x.iter_rows() {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant = Vec::new();
        let scales = vars
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * means[j].abs().max(1.0) {
                    sd
                } else {
                    constant.push(j);
                    1.0
                }
            })
            .collect();
        if !constant.is_empty() {
            log::warn!("zero-variance feature columns {constant:?} left unscaled");
        }
        Ok((Scaler { means, scales }, constant))
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Vec::with_capacity(x.data.len());
        for r in x.iter_rows() {
            out.extend(self.transform_row(r)?);
        }
        Ok(Matrix::new(x.rows, x.cols, out))
    }
}

pub fn standardize(x: &Matrix) -> Result<Standardized> {
    let (scaler, constant_columns) = Scaler::fit(x)?;
    Ok(Standardized {
        matrix: scaler.transform(x)?,
        scaler,
        constant_columns,
    })
}
