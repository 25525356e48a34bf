use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hen_core::hopfield::{DEFAULT_CONVERGENCE_TOL, DEFAULT_MAX_ITERS};
use hen_core::image::ImageShape;
use hen_core::kernel;
use hen_core::Similarity;
use serde::{Deserialize, Serialize};

use crate::occlusion::Occlusion;

pub const OUTPUT_DIR_ENV: &str = "HEN_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Retrieve,
    SweepBeta,
    ScaleOut,
    Separability,
    RankTrace,
    Hetero,
    Uniqueness,
    KmnCompare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Retrieve => "retrieve",
            Experiment::SweepBeta => "sweep-beta",
            Experiment::ScaleOut => "scale-out",
            Experiment::Separability => "separability",
            Experiment::RankTrace => "rank-trace",
            Experiment::Hetero => "hetero",
            Experiment::Uniqueness => "uniqueness",
            Experiment::KmnCompare => "kmn-compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CodecKind {
    Identity,
    Spherical,
    Projection,
    Precomputed,
}

impl CodecKind {
    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Identity => "identity",
            CodecKind::Spherical => "spherical",
            CodecKind::Projection => "projection",
            CodecKind::Precomputed => "precomputed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    /// Shared uniform base plus small per-item noise.
    Correlated,
    /// Independent uniform pixels.
    Separable,
    /// Gaussian directions scaled to unit norm; not pixel valued.
    RandomUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPoint {
    pub alpha: f64,
    pub r: f64,
}

fn default_kernel_grid() -> Vec<KernelPoint> {
    kernel::default_grid()
        .into_iter()
        .map(|(alpha, r)| KernelPoint { alpha, r })
        .collect()
}

/// The β grid 20, 40, …, 500.
pub fn default_beta_grid() -> Vec<f64> {
    (1..=25).map(|i| 20.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Directory of PPM images (with optional `captions.tsv`) or a HENB
    /// file. When absent a synthetic fixture is generated.
    pub dataset_path: Option<PathBuf>,
    /// Caption file overriding `captions.tsv` in the dataset directory.
    pub captions_path: Option<PathBuf>,
    pub fixture: FixtureKind,
    /// Fixture size; defaults to 64, or the largest scale-out size.
    pub fixture_count: Option<usize>,
    pub fixture_noise: f64,
    pub image_shape: ImageShape,
    pub codecs: Vec<CodecKind>,
    /// Projection output size; defaults to the pattern length.
    pub latent_dim: Option<usize>,
    /// Shift patterns by the bank mean before projecting.
    pub center_projection: bool,
    /// HENB table for the precomputed codec.
    pub embeddings_path: Option<PathBuf>,
    /// HENB table of encoded occluded queries, keyed by the same ids.
    pub query_embeddings_path: Option<PathBuf>,
    pub similarities: Vec<Similarity>,
    pub beta: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub kernel_grid: Vec<KernelPoint>,
    pub pinv_tol_factor: Option<f64>,
    pub beta_grid: Vec<f64>,
    pub sizes: Vec<usize>,
    pub occlusion: Occlusion,
    pub histogram_bins: usize,
    pub normalize_segments: bool,
    pub clamp_text: bool,
    pub block_side: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Retrieve,
            dataset_path: None,
            captions_path: None,
            fixture: FixtureKind::Correlated,
            fixture_count: None,
            fixture_noise: hen_core::fixtures::CORRELATED_NOISE,
            image_shape: ImageShape::new(16, 16, 3),
            codecs: vec![CodecKind::Projection],
            latent_dim: None,
            center_projection: true,
            embeddings_path: None,
            query_embeddings_path: None,
            similarities: vec![Similarity::DotProduct],
            beta: 150.0,
            max_iters: DEFAULT_MAX_ITERS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            kernel_grid: default_kernel_grid(),
            pinv_tol_factor: None,
            beta_grid: default_beta_grid(),
            sizes: vec![200, 400, 800, 1600],
            occlusion: Occlusion::LeftHalf,
            histogram_bins: hen_core::metrics::DEFAULT_HISTOGRAM_BINS,
            normalize_segments: true,
            clamp_text: false,
            block_side: hen_core::codec::DEFAULT_BLOCK_SIDE,
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        Self {
            experiment,
            ..Self::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn fixture_size(&self) -> usize {
        match (self.fixture_count, self.experiment) {
            (Some(n), _) => n,
            (None, Experiment::ScaleOut) => self.sizes.iter().copied().max().unwrap_or(64),
            (None, _) => 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bail!("beta must be positive, got {}", self.beta);
        }
        if self.max_iters == 0 {
            bail!("max_iters must be at least 1");
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            bail!("convergence_tol must be non-negative");
        }
        if self.codecs.is_empty() {
            bail!("at least one codec is required");
        }
        if self.similarities.is_empty() {
            bail!("at least one similarity is required");
        }
        if self.image_shape.is_empty() {
            bail!("image shape must be non-empty");
        }
        if self.histogram_bins == 0 {
            bail!("histogram needs at least one bin");
        }
        if matches!(self.experiment, Experiment::SweepBeta | Experiment::RankTrace) {
            if self.beta_grid.is_empty() {
                bail!("beta grid must not be empty");
            }
            if let Some(b) = self.beta_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                bail!("beta grid value {b} is not positive");
            }
        }
        if self.experiment == Experiment::ScaleOut {
            if self.sizes.is_empty() {
                bail!("sizes must not be empty");
            }
            if self.sizes.contains(&0) {
                bail!("sizes must be positive");
            }
            if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
                bail!("sizes must be strictly ascending");
            }
        }
        if self.experiment == Experiment::KmnCompare && self.kernel_grid.is_empty() {
            bail!("kernel grid must not be empty");
        }
        for p in &self.kernel_grid {
            kernel::KernelParams::new(p.alpha, p.r)?;
        }
        if self.fixture_noise < 0.0 {
            bail!("fixture noise must be non-negative");
        }
        Ok(())
    }

    /// Flag value, then config value, then `HEN_OUTPUT_DIR`, then
    /// `hen-output` in the working directory.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("hen-output"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_beta_grid_spans_twenty_to_five_hundred() {
        let grid = default_beta_grid();
        assert_eq!(grid.len(), 25);
        assert_eq!(grid[0], 20.0);
        assert_eq!(grid[24], 500.0);
    }

    #[test]
    fn validation_rejects_bad_grids() {
        let mut c = ExperimentConfig::for_experiment(Experiment::SweepBeta);
        assert!(c.validate().is_ok());
        c.beta_grid.clear();
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::for_experiment(Experiment::ScaleOut);
        c.sizes = vec![0];
        assert!(c.validate().is_err());
        c.sizes = vec![400, 200];
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_with_partial_fields() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "sweep-beta", "beta_grid": [2, 20], "codecs": ["identity"], "similarities": ["l2"]}"#)
                .unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(c.experiment, Experiment::SweepBeta);
        assert_eq!(c.beta_grid, vec![2.0, 20.0]);
        assert_eq!(c.codecs, vec![CodecKind::Identity]);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"betta": 1}"#).is_err());
    }

    #[test]
    fn scale_out_fixture_covers_largest_size() {
        let mut c = ExperimentConfig::for_experiment(Experiment::ScaleOut);
        c.sizes = vec![10, 30];
        assert_eq!(c.fixture_size(), 30);
        assert_eq!(ExperimentConfig::default().fixture_size(), 64);
    }
}
