use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The `Q` of `<u, v>_Q = u^T Q v`: identity or a positive diagonal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QMetric {
    diag: Option<Vec<f64>>,
}

impl QMetric {
    pub fn identity() -> Self {
        QMetric { diag: None }
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
            return Err(Error::config("diagonal Q entries must be positive and finite"));
        }
        Ok(QMetric { diag: Some(diag) })
    }

    /// Accepts a square matrix only if it is diagonal.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::config("Q must be square"));
        }
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if i != j && v != 0.0 {
                    return Err(Error::DenseMetric);
                }
            }
        }
        QMetric::diagonal((0..n).map(|i| rows[i][i]).collect())
    }

    pub fn diag(&self) -> Option<&[f64]> {
        self.diag.as_deref()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match &self.diag {
            Some(d) if d.len() != dim => Err(Error::Dimension {
                expected: dim,
                got: d.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Entry `i` of the diagonal (1 for identity).
    pub fn weight(&self, i: usize) -> f64 {
        self.diag.as_ref().map_or(1.0, |d| d[i])
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match &self.diag {
            None => u.iter().zip(v).map(|(a, b)| a * b).sum(),
            Some(q) => u.iter().zip(v).zip(q).map(|((a, b), w)| w * a * b).sum(),
        }
    }

    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.norm_sq(u).sqrt()
    }

    pub fn dist(&self, u: &[f64], v: &[f64]) -> f64 {
        let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        self.norm(&d)
    }
}
