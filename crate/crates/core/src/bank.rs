use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{HenError, Result};

/// Stored patterns, one memory per row.
///
/// Row order is the memory identity: index `n` is the id every metric and
/// retrieval result refers to. A bank is immutable once built, so it can be
/// shared freely between concurrent retrievals.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    data: Vec<f64>,
    count: usize,
    dim: usize,
}

impl MemoryBank {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let count = rows.len();
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if count == 0 || dim == 0 {
            return Err(HenError::EmptyBank);
        }
        let mut data = Vec::with_capacity(count * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(HenError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(count, dim, data)
    }

    /// Builds a bank from a row-major buffer of `count * dim` values.
    pub fn from_flat(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if count == 0 || dim == 0 {
            return Err(HenError::EmptyBank);
        }
        if data.len() != count * dim {
            return Err(HenError::DimensionMismatch {
                expected: count * dim,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HenError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(Self { data, count, dim })
    }

    /// Number of stored memories (N).
    pub fn count(&self) -> usize {
        self.count
    }

    /// Pattern length (K).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.count, self.dim, &self.data)
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(HenError::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }
}

/// The evolving retrieval state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(HenError::NonFinite { row: 0, col: i });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<&[f64]> for StateVector {
    fn from(values: &[f64]) -> Self {
        Self(values.to_vec())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
