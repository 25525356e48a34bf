//! Log-sum-exp Hopfield dynamics.
//!
//! ```text
//! E(s)    = -(1/β) log Σ_n exp(β ξ_nᵀ s) + ½ sᵀs
//! s(t+1)  = Σ_n softmax_n(β sim(ξ_n, s(t))) ξ_n
//! ```
//!
//! The same recurrence serves raw-pattern retrieval and latent-space
//! retrieval; the caller decides what the bank rows hold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bank::{dot, squared_distance, MemoryBank, StateVector};
use crate::error::{HenError, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// `ξᵀs`
    #[serde(alias = "dot")]
    DotProduct,
    /// `-‖ξ - s‖²`
    #[serde(alias = "l2")]
    NegSquaredL2,
}

impl Similarity {
    pub fn eval(self, memory: &[f64], state: &[f64]) -> f64 {
        match self {
            Similarity::DotProduct => dot(memory, state),
            Similarity::NegSquaredL2 => -squared_distance(memory, state),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Similarity::DotProduct => "dot",
            Similarity::NegSquaredL2 => "l2",
        }
    }
}

impl std::str::FromStr for Similarity {
    type Err = HenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" | "dot-product" => Ok(Similarity::DotProduct),
            "l2" | "neg-squared-l2" => Ok(Similarity::NegSquaredL2),
            other => Err(HenError::InvalidParameter(format!(
                "unknown similarity `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Inverse temperature.
    pub beta: f64,
    pub similarity: Similarity,
    /// T_f, the iteration cap.
    pub max_iters: usize,
    /// Step-norm threshold. Zero disables early stopping.
    pub convergence_tol: f64,
}

impl EnergyParams {
    pub fn new(beta: f64, similarity: Similarity) -> Result<Self> {
        let params = Self {
            beta,
            similarity,
            max_iters: DEFAULT_MAX_ITERS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_iterations(mut self, max_iters: usize, convergence_tol: f64) -> Result<Self> {
        self.max_iters = max_iters;
        self.convergence_tol = convergence_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(HenError::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.max_iters == 0 {
            return Err(HenError::InvalidParameter("max_iters must be >= 1".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(HenError::InvalidParameter(
                "convergence_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub final_state: StateVector,
    pub iterations_run: usize,
    /// Energy after each iteration; empty unless the similarity is dot product.
    pub energy_trajectory: Vec<f64>,
    pub converged: bool,
    pub matched_index: Option<usize>,
}

/// Total energy `E1 + E2` with the additive constant fixed to zero.
pub fn lse_energy(state: &[f64], bank: &MemoryBank, params: &EnergyParams) -> Result<f64> {
    bank.check_dim(state.len())?;
    if params.similarity != Similarity::DotProduct {
        return Err(HenError::EnergyUndefined);
    }
    let beta = params.beta;
    let scores: Vec<f64> = bank.rows().map(|row| beta * dot(row, state)).collect();
    let lse = log_sum_exp(&scores);
    Ok(-lse / beta + 0.5 * dot(state, state))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// In-place max-shifted softmax.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_weights(state: &[f64], bank: &MemoryBank, params: &EnergyParams) -> Result<Vec<f64>> {
    bank.check_dim(state.len())?;
    let mut weights: Vec<f64> = bank
        .rows()
        .map(|row| params.beta * params.similarity.eval(row, state))
        .collect();
    softmax_in_place(&mut weights);
    Ok(weights)
}

/// One application of the recurrence: the softmax-weighted convex
/// combination of the stored rows.
pub fn update_step(state: &[f64], bank: &MemoryBank, params: &EnergyParams) -> Result<StateVector> {
    let weights = softmax_weights(state, bank, params)?;
    Ok(StateVector::from(combine_rows(bank, &weights).as_slice()))
}

pub(crate) fn combine_rows(bank: &MemoryBank, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; bank.dim()];
    for (row, &w) in bank.rows().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    out
}

/// Index of the most similar stored row; ties go to the lowest index.
pub fn matched_index(state: &[f64], bank: &MemoryBank, similarity: Similarity) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (n, row) in bank.rows().enumerate() {
        let sim = similarity.eval(row, state);
        if sim > best_sim {
            best_sim = sim;
            best = n;
        }
    }
    best
}

pub fn retrieve(query: &[f64], bank: &MemoryBank, params: &EnergyParams) -> Result<RetrievalResult> {
    retrieve_observed(query, bank, params, |_, _| {})
}

/// Like [`retrieve`], calling `observe(t, state)` after every iteration
/// `t = 1..=iterations_run`.
pub fn retrieve_observed<F>(
    query: &[f64],
    bank: &MemoryBank,
    params: &EnergyParams,
    mut observe: F,
) -> Result<RetrievalResult>
where
    F: FnMut(usize, &[f64]),
{
    params.validate()?;
    bank.check_dim(query.len())?;
    let track_energy = params.similarity == Similarity::DotProduct;
    let mut state = query.to_vec();
    let mut energy_trajectory = Vec::new();
    let mut iterations_run = 0;
    let mut converged = false;
    let mut weights = vec![0.0; bank.count()];

    for t in 1..=params.max_iters {
        for (w, row) in weights.iter_mut().zip(bank.rows()) {
            *w = params.beta * params.similarity.eval(row, &state);
        }
        softmax_in_place(&mut weights);
        let next = combine_rows(bank, &weights);
        let step = squared_distance(&next, &state).sqrt();
        state = next;
        iterations_run = t;
        if track_energy {
            energy_trajectory.push(lse_energy(&state, bank, params)?);
        }
        observe(t, &state);
        converged = step <= params.convergence_tol;
        // A zero tolerance means "always run T_f iterations".
        if converged && params.convergence_tol > 0.0 {
            break;
        }
    }

    let matched = matched_index(&state, bank, params.similarity);
    Ok(RetrievalResult {
        final_state: StateVector::new(state)?,
        iterations_run,
        energy_trajectory,
        converged,
        matched_index: Some(matched),
    })
}

/// Query/key/value maps for the attention form of the update.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    /// D × K
    pub w_q: DMatrix<f64>,
    /// D × K
    pub w_k: DMatrix<f64>,
    /// D_v × K
    pub w_v: DMatrix<f64>,
    pub d_k: f64,
}

impl TransformerParams {
    pub fn new(w_q: DMatrix<f64>, w_k: DMatrix<f64>, w_v: DMatrix<f64>, d_k: f64) -> Result<Self> {
        let params = Self { w_q, w_k, w_v, d_k };
        params.validate()?;
        Ok(params)
    }

    /// Identity maps on K dimensions with `1/√d_k = beta`.
    pub fn identity(dim: usize, beta: f64) -> Result<Self> {
        let eye = DMatrix::identity(dim, dim);
        Self::new(eye.clone(), eye.clone(), eye, 1.0 / (beta * beta))
    }

    fn validate(&self) -> Result<()> {
        let k = self.w_q.ncols();
        for m in [&self.w_k, &self.w_v] {
            if m.ncols() != k {
                return Err(HenError::DimensionMismatch {
                    expected: k,
                    got: m.ncols(),
                });
            }
        }
        if self.w_q.nrows() != self.w_k.nrows() {
            return Err(HenError::DimensionMismatch {
                expected: self.w_q.nrows(),
                got: self.w_k.nrows(),
            });
        }
        let scale = 1.0 / self.d_k.sqrt();
        if !(self.d_k > 0.0 && scale.is_finite()) {
            return Err(HenError::InvalidParameter(format!(
                "1/sqrt(d_k) must be finite and positive, got d_k = {}",
                self.d_k
            )));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        1.0 / self.d_k.sqrt()
    }
}

/// `Vᵀ softmax((1/√d_k) K qᵀ)` with keys and values projected from the
/// stored rows and the query projected from `state`.
pub fn transformer_update(
    state: &[f64],
    bank: &MemoryBank,
    tp: &TransformerParams,
) -> Result<StateVector> {
    bank.check_dim(state.len())?;
    if tp.w_q.ncols() != bank.dim() {
        return Err(HenError::DimensionMismatch {
            expected: bank.dim(),
            got: tp.w_q.ncols(),
        });
    }
    let memories = bank.to_matrix().transpose(); // K × N
    let keys = &tp.w_k * &memories; // D × N
    let values = &tp.w_v * &memories; // D_v × N
    let query = &tp.w_q * DVector::from_column_slice(state);
    let scale = tp.scale();
    let mut weights: Vec<f64> = keys
        .column_iter()
        .map(|key| scale * dot(key.as_slice(), query.as_slice()))
        .collect();
    softmax_in_place(&mut weights);
    let mut out = vec![0.0; values.nrows()];
    for (value, &w) in values.column_iter().zip(&weights) {
        for (o, v) in out.iter_mut().zip(value.iter()) {
            *o += w * v;
        }
    }
    StateVector::new(out)
}
