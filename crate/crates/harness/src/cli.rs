use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hen_core::image::ImageShape;
use hen_core::Similarity;

use crate::config::{CodecKind, Experiment, ExperimentConfig, FixtureKind, KernelPoint};
use crate::experiments;
use crate::occlusion::Occlusion;
use crate::output;

#[derive(Debug, Parser)]
#[command(name = "hen", version, about = "Dense associative memory retrieval experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve every stored item from its occluded query.
    Retrieve(RunArgs),
    /// Sweep the inverse temperature over a grid.
    SweepBeta(RunArgs),
    /// Grow the memory bank through a list of sizes.
    ScaleOut(RunArgs),
    /// Cosine similarity histograms between queries and memories.
    Separability(RunArgs),
    /// Relative rank of the state matrix at every iteration.
    RankTrace(RunArgs),
    /// Text-to-image retrieval from concatenated memories.
    Hetero(RunArgs),
    /// Two items sharing one text key, against a unique-key control.
    Uniqueness(RunArgs),
    /// Kernel memory over an (alpha, r) grid beside the Hopfield baseline.
    KmnCompare(RunArgs),
}

impl Command {
    fn split(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::Retrieve(a) => (Experiment::Retrieve, a),
            Command::SweepBeta(a) => (Experiment::SweepBeta, a),
            Command::ScaleOut(a) => (Experiment::ScaleOut, a),
            Command::Separability(a) => (Experiment::Separability, a),
            Command::RankTrace(a) => (Experiment::RankTrace, a),
            Command::Hetero(a) => (Experiment::Hetero, a),
            Command::Uniqueness(a) => (Experiment::Uniqueness, a),
            Command::KmnCompare(a) => (Experiment::KmnCompare, a),
        }
    }
}

fn parse_kernel_point(s: &str) -> Result<KernelPoint, String> {
    let (alpha, r) = s.split_once(':').ok_or_else(|| format!("expected alpha:r, got `{s}`"))?;
    Ok(KernelPoint {
        alpha: alpha.trim().parse().map_err(|_| format!("bad alpha in `{s}`"))?,
        r: r.trim().parse().map_err(|_| format!("bad r in `{s}`"))?,
    })
}

/// Flags override values from `--config`, which override defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// JSON file with experiment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PPM directory or HENB file; a synthetic fixture is used when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// TSV file of `id<TAB>caption` lines.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fixture: Option<FixtureKind>,
    #[arg(long)]
    pub fixture_count: Option<usize>,
    #[arg(long)]
    pub fixture_noise: Option<f64>,
    /// Target image shape, e.g. 28x28x3.
    #[arg(long)]
    pub image_shape: Option<ImageShape>,
    /// Codecs to evaluate (comma separated).
    #[arg(long = "codec", value_enum, value_delimiter = ',')]
    pub codecs: Vec<CodecKind>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Project raw patterns without subtracting the bank mean.
    #[arg(long)]
    pub no_center: bool,
    /// HENB table for the precomputed codec.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// HENB table of encoded occluded queries.
    #[arg(long)]
    pub query_embeddings: Option<PathBuf>,
    /// Similarities to evaluate: dot, l2 (comma separated).
    #[arg(long = "similarity", value_delimiter = ',')]
    pub similarities: Vec<Similarity>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Step-norm convergence threshold; 0 always runs max_iters steps.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Kernel grid points as alpha:r (comma separated).
    #[arg(long = "kernel", value_parser = parse_kernel_point, value_delimiter = ',')]
    pub kernel_grid: Vec<KernelPoint>,
    #[arg(long)]
    pub pinv_tol_factor: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub beta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum)]
    pub occlusion: Option<Occlusion>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Concatenate hetero segments without normalizing them.
    #[arg(long)]
    pub no_normalize_segments: bool,
    /// Hold the text segment fixed during hetero retrieval.
    #[arg(long)]
    pub clamp_text: bool,
    #[arg(long)]
    pub block_side: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; falls back to HEN_OUTPUT_DIR, then ./hen-output.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

fn set_list<T: Clone>(target: &mut Vec<T>, values: &[T]) {
    if !values.is_empty() {
        *target = values.to_vec();
    }
}

impl RunArgs {
    pub fn to_config(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        c.experiment = experiment;
        if self.dataset.is_some() {
            c.dataset_path = self.dataset.clone();
        }
        if self.captions.is_some() {
            c.captions_path = self.captions.clone();
        }
        set(&mut c.fixture, &self.fixture);
        if self.fixture_count.is_some() {
            c.fixture_count = self.fixture_count;
        }
        set(&mut c.fixture_noise, &self.fixture_noise);
        set(&mut c.image_shape, &self.image_shape);
        set_list(&mut c.codecs, &self.codecs);
        if self.latent_dim.is_some() {
            c.latent_dim = self.latent_dim;
        }
        if self.no_center {
            c.center_projection = false;
        }
        if self.embeddings.is_some() {
            c.embeddings_path = self.embeddings.clone();
        }
        if self.query_embeddings.is_some() {
            c.query_embeddings_path = self.query_embeddings.clone();
        }
        set_list(&mut c.similarities, &self.similarities);
        set(&mut c.beta, &self.beta);
        set(&mut c.max_iters, &self.max_iters);
        set(&mut c.convergence_tol, &self.tol);
        set_list(&mut c.kernel_grid, &self.kernel_grid);
        if self.pinv_tol_factor.is_some() {
            c.pinv_tol_factor = self.pinv_tol_factor;
        }
        set_list(&mut c.beta_grid, &self.beta_grid);
        set_list(&mut c.sizes, &self.sizes);
        set(&mut c.occlusion, &self.occlusion);
        set(&mut c.histogram_bins, &self.bins);
        if self.no_normalize_segments {
            c.normalize_segments = false;
        }
        if self.clamp_text {
            c.clamp_text = true;
        }
        set(&mut c.block_side, &self.block_side);
        set(&mut c.seed, &self.seed);
        c.validate()?;
        Ok(c)
    }
}

/// Parses arguments, runs the experiment and writes its outputs. Returns
/// the written file paths.
pub fn run_from_args<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (experiment, args) = cli.command.split();
    let config = args.to_config(experiment)?;
    let dir = config.resolve_output_dir(args.output_dir.as_deref());
    let run = experiments::run(&config).with_context(|| format!("running {}", experiment.name()))?;
    output::write_run(&dir, &config, &run)
}
