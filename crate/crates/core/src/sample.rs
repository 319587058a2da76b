//! Row-major observation matrices and small vector helpers.

use crate::error::{domain, Result};
use crate::numerics::SymMatrix;

/// An n×k matrix of observations; each row is a point in R^k.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    dim: usize,
}

impl Sample {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return domain("sample dimension must be at least 1");
        }
        if !values.len().is_multiple_of(dim) {
            return domain(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("sample contains non-finite values");
        }
        Ok(Self { values, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return domain("cannot infer dimension from zero rows");
        };
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return domain(format!("row {i} has width {} (expected {dim})", row.len()));
            }
            values.extend_from_slice(row);
        }
        Self::new(values, dim)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), dim)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Every row shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        assert_eq!(offset.len(), self.dim, "offset dimension");
        let values = self
            .values
            .chunks_exact(self.dim)
            .flat_map(|row| row.iter().zip(offset).map(|(a, b)| a + b))
            .collect();
        Self { values, dim: self.dim }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Sample) -> Result<Self> {
        if self.dim != other.dim {
            return domain(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            ));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self { values, dim: self.dim })
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            axpy(1.0, row, &mut m);
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Sample covariance with the 1/n denominator.
    pub fn covariance(&self) -> SymMatrix {
        let mean = self.mean();
        let k = self.dim;
        let mut acc = vec![0.0; k * k];
        let mut centered = vec![0.0; k];
        for row in self.rows() {
            for (c, (a, b)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
                *c = a - b;
            }
            add_outer(1.0, &centered, &mut acc);
        }
        let n = self.len().max(1) as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        SymMatrix::from_row_major(k, acc).expect("outer-product sum is symmetric")
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    let s = dot(a, a);
    if s.is_normal() && s < 1e300 {
        return s.sqrt();
    }
    // rescale when the squares under- or overflow
    let m = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * a.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

/// y += alpha * x
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// acc (row-major k×k) += alpha * v vᵀ
pub(crate) fn add_outer(alpha: f64, v: &[f64], acc: &mut [f64]) {
    let k = v.len();
    for i in 0..k {
        let vi = alpha * v[i];
        for j in 0..k {
            acc[i * k + j] += vi * v[j];
        }
    }
}
