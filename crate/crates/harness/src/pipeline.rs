//! Encode → retrieve → decode → score, shared by every experiment.

use anyhow::{anyhow, bail, Context, Result};
use hen_core::codec::{Centering, Codec, EmbeddingTable, RandomProjection};
use hen_core::hopfield::{self, EnergyParams, RetrievalResult};
use hen_core::image::{Image, ImageShape};
use hen_core::kernel::KernelMemory;
use hen_core::metrics::{self, SsimParams};
use hen_core::{henb, linalg, MemoryBank};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CodecKind, ExperimentConfig};
use crate::dataset::Dataset;
use crate::occlusion::Occlusion;

/// Stored items and their queries, both in latent space.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub codec: Codec,
    pub bank: MemoryBank,
    pub queries: Vec<Vec<f64>>,
}

fn embedding_table(config: &ExperimentConfig, dataset: &Dataset) -> Result<EmbeddingTable> {
    match (&config.embeddings_path, &dataset.embeddings) {
        (Some(path), _) => Ok(henb::load_embedding_table(path)?),
        (None, Some(table)) => Ok(table.clone()),
        (None, None) => bail!("the precomputed codec needs an embeddings file (--embeddings)"),
    }
}

/// Builds a codec of `kind` for patterns of length `input_dim`. A centred
/// projection is fitted to `patterns`.
pub fn build_codec<R: AsRef<[f64]>>(
    kind: CodecKind,
    config: &ExperimentConfig,
    dataset: &Dataset,
    input_dim: usize,
    patterns: &[R],
) -> Result<Codec> {
    Ok(match kind {
        CodecKind::Identity => Codec::identity(input_dim),
        CodecKind::Spherical => Codec::spherical(input_dim),
        CodecKind::Projection => {
            let latent_dim = config.latent_dim.unwrap_or(input_dim).min(input_dim);
            let mut projection = RandomProjection::new(input_dim, latent_dim, config.seed)?;
            if config.center_projection {
                projection = projection.with_centering(Centering::fit(patterns)?)?;
            }
            Codec::RandomProjection(projection)
        }
        CodecKind::Precomputed => Codec::precomputed(embedding_table(config, dataset)?)?,
    })
}

pub fn encode(kind: CodecKind, config: &ExperimentConfig, dataset: &Dataset) -> Result<Encoded> {
    if dataset.is_empty() {
        bail!("dataset is empty");
    }
    let patterns = dataset.patterns();
    let codec = build_codec(kind, config, dataset, dataset.shape.len(), &patterns)?;
    let stored: Vec<Vec<f64>> = patterns
        .par_iter()
        .map(|p| codec.encode(p))
        .collect::<hen_core::Result<_>>()
        .context("encoding stored patterns")?;
    let queries = match (&codec, config.occlusion) {
        (Codec::Precomputed(_), Occlusion::None) if config.query_embeddings_path.is_none() => stored.clone(),
        (Codec::Precomputed(table), _) => {
            let path = config
                .query_embeddings_path
                .as_ref()
                .ok_or_else(|| anyhow!("occluded queries with the precomputed codec need --query-embeddings"))?;
            let query_table = henb::load_embedding_table(path)?;
            patterns
                .iter()
                .map(|p| {
                    let id = table.lookup(p).ok_or(hen_core::HenError::LookupMiss)?.id;
                    query_table
                        .get(id)
                        .map(|e| e.latent.clone())
                        .ok_or_else(|| anyhow!("query table has no entry for id {id}"))
                })
                .collect::<Result<_>>()?
        }
        _ => {
            let mask = config.occlusion.observed_mask(dataset.shape);
            patterns
                .par_iter()
                .map(|p| codec.encode_partial(p, &mask))
                .collect::<hen_core::Result<_>>()
                .context("encoding queries")?
        }
    };
    let bank = MemoryBank::from_rows(&stored)?;
    Ok(Encoded { codec, bank, queries })
}

pub fn energy_params(config: &ExperimentConfig, beta: f64, similarity: hen_core::Similarity) -> Result<EnergyParams> {
    Ok(EnergyParams::new(beta, similarity)?.with_iterations(config.max_iters, config.convergence_tol)?)
}

/// Retrieves every query against the bank, in parallel, in query order.
pub fn run_mhn(encoded: &Encoded, params: &EnergyParams) -> Vec<hen_core::Result<RetrievalResult>> {
    encoded
        .queries
        .par_iter()
        .map(|q| hopfield::retrieve(q, &encoded.bank, params))
        .collect()
}

pub fn run_kmn(encoded: &Encoded, memory: &KernelMemory, max_iters: usize, tol: f64) -> Vec<hen_core::Result<RetrievalResult>> {
    encoded
        .queries
        .par_iter()
        .map(|q| memory.retrieve(q, max_iters, tol))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub id: u32,
    pub mse: Option<f64>,
    pub one_minus_ssim: Option<f64>,
    pub matched_index: Option<usize>,
    pub correct_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub pairs: Vec<PairRow>,
    /// Mean latent-space MSE; `None` when any retrieval failed.
    pub mean_mse: Option<f64>,
    pub mean_one_minus_ssim: Option<f64>,
    pub identity_accuracy: f64,
    /// Computed on request, and only when every retrieval succeeded.
    pub relative_rank: Option<f64>,
    /// Retrievals that produced non-finite states.
    pub failures: usize,
    /// Largest per-step energy increase seen over all trajectories.
    pub max_energy_increase: f64,
}

fn clamp01(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

/// Whether 1 − SSIM can be reported for this dataset.
pub fn ssim_applies(dataset: &Dataset, params: &SsimParams) -> bool {
    dataset.pixel_valued && dataset.shape.height >= params.window_side && dataset.shape.width >= params.window_side
}

/// 1 − SSIM between two latents after decoding and clamping to `[0, 1]`.
pub fn decoded_dissimilarity(codec: &Codec, shape: ImageShape, a: &[f64], b: &[f64], params: &SsimParams) -> Result<f64> {
    let ia = Image::new(shape, clamp01(&codec.decode(a)?))?;
    let ib = Image::new(shape, clamp01(&codec.decode(b)?))?;
    Ok(metrics::one_minus_ssim(&ia, &ib, params)?)
}

/// Scores each retrieval against the stored latent with the same index.
///
/// MSE is taken in latent space. 1 − SSIM compares the decoded stored
/// latent with the decoded final state, both clamped to the pixel range.
pub fn evaluate(
    encoded: &Encoded,
    dataset: &Dataset,
    outcomes: &[hen_core::Result<RetrievalResult>],
    with_rank: bool,
) -> Result<Evaluation> {
    let ssim_params = SsimParams::default();
    let with_ssim = ssim_applies(dataset, &ssim_params);
    let pairs: Vec<PairRow> = outcomes
        .par_iter()
        .enumerate()
        .map(|(i, outcome)| {
            let id = dataset.items[i].id;
            let stored = encoded.bank.row(i);
            Ok(match outcome {
                Ok(r) => PairRow {
                    id,
                    mse: Some(metrics::mse(stored, &r.final_state)?),
                    one_minus_ssim: if with_ssim {
                        Some(decoded_dissimilarity(&encoded.codec, dataset.shape, stored, &r.final_state, &ssim_params)?)
                    } else {
                        None
                    },
                    matched_index: r.matched_index,
                    correct_identity: r.matched_index == Some(i),
                },
                Err(_) => PairRow {
                    id,
                    mse: None,
                    one_minus_ssim: None,
                    matched_index: None,
                    correct_identity: false,
                },
            })
        })
        .collect::<Result<_>>()?;

    let n = pairs.len() as f64;
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let mean = |f: fn(&PairRow) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = pairs.iter().filter_map(f).collect();
        (values.len() == pairs.len() && !values.is_empty()).then(|| values.iter().sum::<f64>() / n)
    };
    let mean_mse = mean(|p| p.mse);
    let mean_one_minus_ssim = mean(|p| p.one_minus_ssim);
    let identity_accuracy = pairs.iter().filter(|p| p.correct_identity).count() as f64 / n;

    let relative_rank = if with_rank && failures == 0 {
        let finals: Vec<&[f64]> = outcomes
            .iter()
            .map(|o| o.as_ref().map(|r| r.final_state.as_slice()).expect("no failures"))
            .collect();
        let recovered = metrics::rows_to_matrix(&finals)?;
        let bank = encoded.bank.to_matrix();
        Some(metrics::relative_rank(&recovered, &bank, default_rank_tol(&encoded.bank))?)
    } else {
        None
    };

    let max_energy_increase = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .flat_map(|r| r.energy_trajectory.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(Evaluation {
        pairs,
        mean_mse,
        mean_one_minus_ssim,
        identity_accuracy,
        relative_rank,
        failures,
        max_energy_increase,
    })
}

/// `max(N, K) · ε` for the bank's shape.
pub fn default_rank_tol(bank: &MemoryBank) -> f64 {
    linalg::default_tol_factor(bank.count(), bank.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, FixtureKind};
    use crate::dataset;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            fixture: FixtureKind::Separable,
            fixture_count: Some(12),
            image_shape: ImageShape::new(12, 12, 1),
            ..ExperimentConfig::for_experiment(Experiment::Retrieve)
        }
    }

    #[test]
    fn perfect_recall_scores_zero() {
        let mut config = small_config();
        config.occlusion = Occlusion::None;
        let data = dataset::from_config(&config).unwrap();
        let encoded = encode(CodecKind::Projection, &config, &data).unwrap();
        let params = energy_params(&config, 150.0, hen_core::Similarity::DotProduct).unwrap();
        let eval = evaluate(&encoded, &data, &run_mhn(&encoded, &params), true).unwrap();
        assert_eq!(eval.identity_accuracy, 1.0);
        assert!(eval.mean_mse.unwrap() < 1e-12);
        assert!(eval.mean_one_minus_ssim.unwrap() < 1e-9);
        assert_eq!(eval.relative_rank, Some(1.0));
        assert_eq!(eval.failures, 0);
    }

    #[test]
    fn precomputed_codec_without_table_is_rejected() {
        let config = small_config();
        let data = dataset::from_config(&config).unwrap();
        assert!(encode(CodecKind::Precomputed, &config, &data).is_err());
    }
}
