//! Kernel memory baseline: `s ← Ξᵀ K† k(Ξ, s)` with the radial exponential
//! kernel `k(x, y) = exp(-(‖x - y‖ / r)^α)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bank::{squared_distance, MemoryBank, StateVector};
use crate::error::{HenError, Result};
use crate::hopfield::{matched_index, RetrievalResult, Similarity};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub alpha: f64,
    /// Spatial scale.
    pub r: f64,
    /// Relative singular-value cutoff for the pseudoinverse; `None` picks
    /// `max(N, K) · ε` for the bank at hand.
    pub pinv_tol_factor: Option<f64>,
}

impl KernelParams {
    pub fn new(alpha: f64, r: f64) -> Result<Self> {
        let params = Self {
            alpha,
            r,
            pinv_tol_factor: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(HenError::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(HenError::InvalidParameter(format!(
                "r must be positive, got {}",
                self.r
            )));
        }
        if let Some(tol) = self.pinv_tol_factor {
            if tol.is_nan() || tol < 0.0 {
                return Err(HenError::InvalidParameter(
                    "pinv_tol_factor must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    fn tol_factor_for(&self, bank: &MemoryBank) -> f64 {
        self.pinv_tol_factor
            .unwrap_or_else(|| linalg::default_tol_factor(bank.count(), bank.dim()))
    }
}

/// The α/r grid swept by the kernel comparison experiment.
pub fn default_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for alpha in [1.0, 2.0] {
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            grid.push((alpha, r));
        }
    }
    grid
}

pub fn exp_kernel(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HenError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(kernel_unchecked(x, y, params))
}

fn kernel_unchecked(x: &[f64], y: &[f64], params: &KernelParams) -> f64 {
    let dist = squared_distance(x, y).sqrt();
    (-(dist / params.r).powf(params.alpha)).exp()
}

/// Gram matrix of the bank under the exponential kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub source_bank_id: u64,
}

/// FNV-1a over the bank's shape and bit patterns.
pub fn bank_fingerprint(bank: &MemoryBank) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let header = [bank.count() as u64, bank.dim() as u64];
    for word in header
        .into_iter()
        .chain(bank.as_flat().iter().map(|v| v.to_bits()))
    {
        for byte in word.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    }
    hash
}

pub fn kernel_matrix(bank: &MemoryBank, params: &KernelParams) -> Result<KernelMatrix> {
    params.validate()?;
    let n = bank.count();
    let mut values = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let k = kernel_unchecked(bank.row(i), bank.row(j), params);
            values[(i, j)] = k;
            values[(j, i)] = k;
        }
    }
    Ok(KernelMatrix {
        values,
        source_bank_id: bank_fingerprint(bank),
    })
}

/// `Ξᵀ · K† · k_s` with `k_s(n) = k(ξ_n, s)`.
pub fn kmn_update(
    state: &[f64],
    bank: &MemoryBank,
    kmat_pinv: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<StateVector> {
    bank.check_dim(state.len())?;
    let n = bank.count();
    if kmat_pinv.shape() != (n, n) {
        return Err(HenError::DimensionMismatch {
            expected: n,
            got: kmat_pinv.nrows(),
        });
    }
    let k_s = DVector::from_iterator(n, bank.rows().map(|row| kernel_unchecked(row, state, params)));
    let coeffs = kmat_pinv * k_s;
    let mut out = vec![0.0; bank.dim()];
    for (row, &c) in bank.rows().zip(coeffs.iter()) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += c * x;
        }
    }
    StateVector::new(out)
}

/// A bank together with its kernel matrix and cached pseudoinverse.
#[derive(Debug, Clone)]
pub struct KernelMemory {
    bank: MemoryBank,
    params: KernelParams,
    kernel: KernelMatrix,
    pinv: DMatrix<f64>,
}

impl KernelMemory {
    pub fn build(bank: MemoryBank, params: KernelParams) -> Result<Self> {
        let kernel = kernel_matrix(&bank, &params)?;
        let pinv = linalg::pseudoinverse(&kernel.values, params.tol_factor_for(&bank))?;
        Ok(Self {
            bank,
            params,
            kernel,
            pinv,
        })
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn pseudoinverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn update(&self, state: &[f64]) -> Result<StateVector> {
        kmn_update(state, &self.bank, &self.pinv, &self.params)
    }

    /// Iterates [`kmn_update`] until the step norm drops to `tol` or
    /// `max_iters` is reached. No energy is tracked.
    pub fn retrieve(&self, query: &[f64], max_iters: usize, tol: f64) -> Result<RetrievalResult> {
        if max_iters == 0 {
            return Err(HenError::InvalidParameter("max_iters must be >= 1".into()));
        }
        self.bank.check_dim(query.len())?;
        let mut state = query.to_vec();
        let mut iterations_run = 0;
        let mut converged = false;
        for t in 1..=max_iters {
            let next = self.update(&state)?.into_inner();
            let step = squared_distance(&next, &state).sqrt();
            state = next;
            iterations_run = t;
            converged = step <= tol;
            if converged && tol > 0.0 {
                break;
            }
        }
        // nearest stored row, the ordering the radial kernel itself induces
        let matched = matched_index(&state, &self.bank, Similarity::NegSquaredL2);
        Ok(RetrievalResult {
            final_state: StateVector::new(state)?,
            iterations_run,
            energy_trajectory: Vec::new(),
            converged,
            matched_index: Some(matched),
        })
    }
}

pub fn kmn_retrieve(
    query: &[f64],
    bank: &MemoryBank,
    params: &KernelParams,
    max_iters: usize,
    tol: f64,
) -> Result<RetrievalResult> {
    KernelMemory::build(bank.clone(), *params)?.retrieve(query, max_iters, tol)
}
