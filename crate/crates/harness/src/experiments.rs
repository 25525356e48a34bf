//! The experiment battery. Each run returns its CSV tables and a JSON
//! summary; nothing here touches the filesystem except dataset loading.

use anyhow::{bail, ensure, Context, Result};
use hen_core::bank::MemoryBank;
use hen_core::codec::{pixelize_text, Codec};
use hen_core::hetero::{self, HeteroLayout, HeteroRecord};
use hen_core::hopfield;
use hen_core::kernel::{KernelMemory, KernelParams};
use hen_core::metrics::{self, RankTrace, SsimParams};
use hen_core::{fixtures, Similarity};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CodecKind, Experiment, ExperimentConfig};
use crate::dataset::{self, Dataset};
use crate::output::{num, opt, RunOutput, Table};
use crate::pipeline::{self, Encoded, Evaluation};

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let data = dataset::from_config(config)?;
    run_on(config, &data)
}

pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    config.validate()?;
    match config.experiment {
        Experiment::Retrieve => retrieve(config, data),
        Experiment::SweepBeta => sweep_beta(config, data),
        Experiment::ScaleOut => scale_out(config, data),
        Experiment::Separability => separability(config, data),
        Experiment::RankTrace => rank_trace(config, data),
        Experiment::Hetero => hetero_run(config, data),
        Experiment::Uniqueness => uniqueness(config, data),
        Experiment::KmnCompare => kmn_compare(config, data),
    }
}

fn eval_summary(eval: &Evaluation) -> Value {
    json!({
        "mean_mse": eval.mean_mse,
        "mean_one_minus_ssim": eval.mean_one_minus_ssim,
        "identity_accuracy": eval.identity_accuracy,
        "relative_rank": eval.relative_rank,
        "failures": eval.failures,
        "max_energy_increase": eval.max_energy_increase,
    })
}

fn encode_all(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<(CodecKind, Encoded)>> {
    config
        .codecs
        .iter()
        .map(|&kind| Ok((kind, pipeline::encode(kind, config, data).with_context(|| format!("codec {}", kind.name()))?)))
        .collect()
}

fn mhn_eval(
    config: &ExperimentConfig,
    data: &Dataset,
    encoded: &Encoded,
    beta: f64,
    similarity: Similarity,
    with_rank: bool,
) -> Result<Evaluation> {
    let params = pipeline::energy_params(config, beta, similarity)?;
    pipeline::evaluate(encoded, data, &pipeline::run_mhn(encoded, &params), with_rank)
}

const PAIR_HEADER: &[&str] = &["id", "mse", "one_minus_ssim", "matched_index", "correct_identity"];

fn pair_table(name: String, eval: &Evaluation) -> Table {
    let mut t = Table::new(name, PAIR_HEADER);
    for p in &eval.pairs {
        t.push(vec![
            p.id.to_string(),
            opt(p.mse),
            opt(p.one_minus_ssim),
            p.matched_index.map(|m| m.to_string()).unwrap_or_default(),
            p.correct_identity.to_string(),
        ]);
    }
    t
}

fn retrieve(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let mut summary_table = Table::new(
        "retrieve",
        &["codec", "similarity", "mean_mse", "mean_one_minus_ssim", "relative_rank", "identity_accuracy"],
    );
    let mut tables = Vec::new();
    let mut runs = Vec::new();
    for (kind, encoded) in encode_all(config, data)? {
        for &sim in &config.similarities {
            let eval = mhn_eval(config, data, &encoded, config.beta, sim, true)?;
            summary_table.push(vec![
                kind.name().into(),
                sim.name().into(),
                opt(eval.mean_mse),
                opt(eval.mean_one_minus_ssim),
                opt(eval.relative_rank),
                num(eval.identity_accuracy),
            ]);
            tables.push(pair_table(format!("retrieve_{}_{}", kind.name(), sim.name()), &eval));
            runs.push(json!({ "codec": kind.name(), "similarity": sim.name(), "metrics": eval_summary(&eval) }));
        }
    }
    tables.insert(0, summary_table);
    Ok(RunOutput {
        experiment: Experiment::Retrieve,
        tables,
        summary: json!({ "items": data.len(), "runs": runs }),
    })
}

fn sweep_beta(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let mut table = Table::new(
        "sweep_beta",
        &["beta", "codec", "similarity", "mean_mse", "mean_one_minus_ssim", "relative_rank", "identity_accuracy"],
    );
    let encoded = encode_all(config, data)?;
    let mut max_energy_increase = f64::NEG_INFINITY;
    for &beta in &config.beta_grid {
        for (kind, enc) in &encoded {
            for &sim in &config.similarities {
                let eval = mhn_eval(config, data, enc, beta, sim, true)?;
                max_energy_increase = max_energy_increase.max(eval.max_energy_increase);
                table.push(vec![
                    num(beta),
                    kind.name().into(),
                    sim.name().into(),
                    opt(eval.mean_mse),
                    opt(eval.mean_one_minus_ssim),
                    opt(eval.relative_rank),
                    num(eval.identity_accuracy),
                ]);
            }
        }
    }
    Ok(RunOutput {
        experiment: Experiment::SweepBeta,
        tables: vec![table],
        summary: json!({ "items": data.len(), "max_energy_increase": max_energy_increase }),
    })
}

fn scale_out(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    if let Some(&too_big) = config.sizes.iter().find(|&&s| s > data.len()) {
        bail!("size {too_big} exceeds the dataset's {} items", data.len());
    }
    let mut table = Table::new(
        "scale_out",
        &["size", "codec", "similarity", "mean_mse", "mean_one_minus_ssim", "identity_accuracy"],
    );
    for &size in &config.sizes {
        let subset = data.truncated(size);
        for (kind, enc) in encode_all(config, &subset)? {
            for &sim in &config.similarities {
                let eval = mhn_eval(config, &subset, &enc, config.beta, sim, false)?;
                table.push(vec![
                    size.to_string(),
                    kind.name().into(),
                    sim.name().into(),
                    opt(eval.mean_mse),
                    opt(eval.mean_one_minus_ssim),
                    num(eval.identity_accuracy),
                ]);
            }
        }
    }
    Ok(RunOutput {
        experiment: Experiment::ScaleOut,
        tables: vec![table],
        summary: json!({ "items": data.len(), "beta": config.beta }),
    })
}

fn separability(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let mut stats = Table::new(
        "separability",
        &["codec", "self_mean", "self_std", "cross_mean", "cross_std", "gap", "zero_norm_pairs"],
    );
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for (kind, enc) in encode_all(config, data)? {
        let bank: Vec<Vec<f64>> = enc.bank.rows().map(<[f64]>::to_vec).collect();
        let report = metrics::cosine_report(&enc.queries, &bank, config.histogram_bins)?;
        stats.push(vec![
            kind.name().into(),
            num(report.self_mean),
            num(report.self_std),
            num(report.cross_mean),
            num(report.cross_std),
            num(report.gap),
            report.zero_norm_pairs.to_string(),
        ]);
        let mut hist = Table::new(
            format!("separability_{}", kind.name()),
            &["bin_low", "bin_high", "self_count", "cross_count"],
        );
        for b in &report.histogram_bins {
            hist.push(vec![num(b.bin_low), num(b.bin_high), b.self_count.to_string(), b.cross_count.to_string()]);
        }
        tables.push(hist);
        reports.push(json!({
            "codec": kind.name(),
            "self_mean": report.self_mean,
            "self_std": report.self_std,
            "cross_mean": report.cross_mean,
            "cross_std": report.cross_std,
            "gap": report.gap,
            "zero_norm_pairs": report.zero_norm_pairs,
            "histogram_bins": report.histogram_bins,
        }));
    }
    tables.insert(0, stats);
    Ok(RunOutput {
        experiment: Experiment::Separability,
        tables,
        summary: json!({ "items": data.len(), "reports": reports }),
    })
}

/// RR of the full state matrix at every iteration, for one β. Queries that
/// converge early keep their final state in later snapshots.
pub fn rank_series(config: &ExperimentConfig, encoded: &Encoded, beta: f64, similarity: Similarity) -> Result<RankTrace> {
    let params = pipeline::energy_params(config, beta, similarity)?;
    let trajectories: Vec<Vec<Vec<f64>>> = encoded
        .queries
        .par_iter()
        .map(|q| {
            let mut states = vec![q.clone()];
            hopfield::retrieve_observed(q, &encoded.bank, &params, |_, s| states.push(s.to_vec()))?;
            Ok(states)
        })
        .collect::<hen_core::Result<_>>()?;
    let steps = trajectories.iter().map(Vec::len).max().unwrap_or(1);
    let snapshots: Vec<_> = (0..steps)
        .map(|t| {
            let rows: Vec<&[f64]> = trajectories.iter().map(|tr| tr[t.min(tr.len() - 1)].as_slice()).collect();
            metrics::rows_to_matrix(&rows)
        })
        .collect::<hen_core::Result<_>>()?;
    let tol = pipeline::default_rank_tol(&encoded.bank);
    Ok(RankTrace::compute(&snapshots, &encoded.bank.to_matrix(), tol)?)
}

fn rank_trace(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let kind = config.codecs[0];
    let sim = config.similarities[0];
    let encoded = pipeline::encode(kind, config, data)?;
    let mut table = Table::new("rank_trace", &["beta", "iteration", "rr"]);
    let mut finals = Vec::new();
    for &beta in &config.beta_grid {
        let trace = rank_series(config, &encoded, beta, sim)?;
        for (t, rr) in trace.per_iteration_rr.iter().enumerate() {
            table.push(vec![num(beta), t.to_string(), num(*rr)]);
        }
        finals.push(json!({ "beta": beta, "final_rr": trace.per_iteration_rr.last(), "bank_rank": trace.bank_rank }));
    }
    Ok(RunOutput {
        experiment: Experiment::RankTrace,
        tables: vec![table],
        summary: json!({ "codec": kind.name(), "similarity": sim.name(), "items": data.len(), "final": finals }),
    })
}

/// A hetero bank over a dataset: image latents from the image codec and
/// pixelized-caption latents from a codec of the same kind.
pub struct HeteroSetup {
    pub image_codec: Codec,
    pub layout: HeteroLayout,
    pub bank: MemoryBank,
}

pub fn hetero_setup(config: &ExperimentConfig, data: &Dataset, captions: &[String]) -> Result<HeteroSetup> {
    ensure!(captions.len() == data.len(), "one caption per item required");
    let patterns = data.patterns();
    let kind = config.codecs[0];
    let image_codec = pipeline::build_codec(kind, config, data, data.shape.len(), &patterns)?;
    let blocks: Vec<Vec<f64>> = captions
        .iter()
        .map(|c| pixelize_text(c.as_bytes(), config.block_side))
        .collect::<hen_core::Result<_>>()?;
    // Precomputed tables only cover images; captions fall back to the
    // spherical codec.
    let text_kind = if kind == CodecKind::Precomputed { CodecKind::Spherical } else { kind };
    let block_len = config.block_side * config.block_side;
    let text_codec = pipeline::build_codec(text_kind, config, data, block_len, &blocks)?;

    let records: Vec<HeteroRecord> = data
        .items
        .iter()
        .zip(patterns.iter().zip(&blocks))
        .map(|(item, (p, b))| {
            Ok(HeteroRecord {
                id: item.id,
                image_latent: image_codec.encode(p)?,
                text_latent: text_codec.encode(b)?,
            })
        })
        .collect::<hen_core::Result<_>>()?;
    let layout = HeteroLayout::new(image_codec.latent_dim(), text_codec.latent_dim())?;
    let bank = hetero::build_hetero_bank(&records, layout, config.normalize_segments)?;
    Ok(HeteroSetup {
        image_codec,
        layout,
        bank,
    })
}

impl HeteroSetup {
    /// Text-only query for stored row `i`, built from its stored text segment.
    pub fn query(&self, i: usize) -> Result<Vec<f64>> {
        Ok(hetero::make_text_query(self.layout.text(self.bank.row(i)), self.layout)?.into_inner())
    }

    pub fn retrieve(&self, config: &ExperimentConfig, i: usize) -> Result<hetero::HeteroRetrieval> {
        let params = pipeline::energy_params(config, config.beta, config.similarities[0])?;
        Ok(hetero::hetero_retrieve(
            &self.query(i)?,
            &self.bank,
            self.layout,
            &params,
            &self.image_codec,
            config.clamp_text,
        )?)
    }

    fn image_distance(&self, latent: &[f64], i: usize) -> f64 {
        let stored = self.layout.image(self.bank.row(i));
        stored.iter().zip(latent).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

fn captions(data: &Dataset) -> Vec<String> {
    (0..data.len()).map(|i| data.caption(i)).collect()
}

fn hetero_run(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let setup = hetero_setup(config, data, &captions(data))?;
    let ssim_params = SsimParams::default();
    let with_ssim = pipeline::ssim_applies(data, &ssim_params);
    let rows: Vec<(Vec<String>, f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let out = setup.retrieve(config, i)?;
            let stored = setup.layout.image(setup.bank.row(i));
            let mse = metrics::mse(stored, &out.image_latent)?;
            let dissim = if with_ssim {
                Some(pipeline::decoded_dissimilarity(&setup.image_codec, data.shape, stored, &out.image_latent, &ssim_params)?)
            } else {
                None
            };
            let matched = out.result.matched_index;
            let correct = matched == Some(i);
            let row = vec![
                data.items[i].id.to_string(),
                num(mse),
                opt(dissim),
                matched.map(|m| m.to_string()).unwrap_or_default(),
                correct.to_string(),
            ];
            Ok((row, setup.image_distance(&out.image_latent, i), correct))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("hetero", PAIR_HEADER);
    let mut max_image_error: f64 = 0.0;
    let mut correct = 0;
    for (row, err, ok) in rows {
        table.push(row);
        max_image_error = max_image_error.max(err);
        correct += ok as usize;
    }
    Ok(RunOutput {
        experiment: Experiment::Hetero,
        tables: vec![table],
        summary: json!({
            "items": data.len(),
            "image_dim": setup.layout.image_dim,
            "text_dim": setup.layout.text_dim,
            "identity_accuracy": correct as f64 / data.len() as f64,
            "max_image_error": max_image_error,
        }),
    })
}

/// Largest image-latent distance that still counts as recovery.
pub const RECOVERY_TOL: f64 = 1e-6;

/// Outcome of one uniqueness case.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessCase {
    pub case: &'static str,
    pub id_a: u32,
    pub id_b: u32,
    pub dist_a: f64,
    pub dist_b: f64,
    /// Distance from the image recalled with b's own key to b's image.
    pub dist_b_own_key: f64,
    pub threshold: f64,
    pub mixed_state: bool,
}

/// Runs the shared-key case and the unique-key control for a seeded pair.
pub fn uniqueness_cases(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<UniquenessCase>> {
    let (a, b) = fixtures::distinct_pair(data.len(), config.seed)
        .ok_or_else(|| anyhow::anyhow!("uniqueness needs at least two items, dataset has {}", data.len()))?;
    let unique = captions(data);
    let mut shared = unique.clone();
    shared[b] = shared[a].clone();

    [("duplicate", shared), ("control", unique)]
        .into_iter()
        .map(|(case, caps)| {
            let setup = hetero_setup(config, data, &caps)?;
            let out = setup.retrieve(config, a)?;
            let stored_norm = setup.layout.image(setup.bank.row(a)).iter().map(|v| v * v).sum::<f64>().sqrt();
            let threshold = 0.1 * stored_norm;
            let dist_a = setup.image_distance(&out.image_latent, a);
            let dist_b = setup.image_distance(&out.image_latent, b);
            let dist_b_own_key = setup.image_distance(&setup.retrieve(config, b)?.image_latent, b);
            Ok(UniquenessCase {
                case,
                id_a: data.items[a].id,
                id_b: data.items[b].id,
                dist_a,
                dist_b,
                dist_b_own_key,
                threshold,
                mixed_state: dist_a > threshold && dist_b > threshold,
            })
        })
        .collect()
}

fn uniqueness(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let cases = uniqueness_cases(config, data)?;
    let mut table = Table::new("uniqueness", &["case", "id_a", "id_b", "dist_a", "dist_b", "dist_b_own_key", "threshold", "mixed_state"]);
    for c in &cases {
        table.push(vec![
            c.case.into(),
            c.id_a.to_string(),
            c.id_b.to_string(),
            num(c.dist_a),
            num(c.dist_b),
            num(c.dist_b_own_key),
            num(c.threshold),
            c.mixed_state.to_string(),
        ]);
    }
    let control = cases.iter().find(|c| c.case == "control").expect("control case");
    Ok(RunOutput {
        experiment: Experiment::Uniqueness,
        tables: vec![table],
        summary: json!({
            "duplicate_mixed": cases[0].mixed_state,
            "control_recovered": control.dist_a <= RECOVERY_TOL && control.dist_b_own_key <= RECOVERY_TOL,
        }),
    })
}

fn kmn_compare(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let kind = config.codecs[0];
    let sim = config.similarities[0];
    let encoded = pipeline::encode(kind, config, data)?;
    let mut table = Table::new(
        "kmn_compare",
        &["model", "alpha", "r", "mean_mse", "mean_one_minus_ssim", "identity_accuracy"],
    );
    let baseline = mhn_eval(config, data, &encoded, config.beta, sim, false)?;
    table.push(vec![
        "mhn".into(),
        String::new(),
        String::new(),
        opt(baseline.mean_mse),
        opt(baseline.mean_one_minus_ssim),
        num(baseline.identity_accuracy),
    ]);
    let mut points = Vec::new();
    for p in &config.kernel_grid {
        let params = KernelParams {
            pinv_tol_factor: config.pinv_tol_factor,
            ..KernelParams::new(p.alpha, p.r)?
        };
        // A failed build (e.g. SVD trouble) is a result, not a crash.
        let eval = match KernelMemory::build(encoded.bank.clone(), params) {
            Ok(memory) => Some(pipeline::evaluate(
                &encoded,
                data,
                &pipeline::run_kmn(&encoded, &memory, config.max_iters, config.convergence_tol),
                false,
            )?),
            Err(_) => None,
        };
        table.push(vec![
            "kmn".into(),
            num(p.alpha),
            num(p.r),
            opt(eval.as_ref().and_then(|e| e.mean_mse)),
            opt(eval.as_ref().and_then(|e| e.mean_one_minus_ssim)),
            num(eval.as_ref().map_or(0.0, |e| e.identity_accuracy)),
        ]);
        points.push(json!({
            "alpha": p.alpha,
            "r": p.r,
            "built": eval.is_some(),
            "failures": eval.as_ref().map_or(data.len(), |e| e.failures),
        }));
    }
    Ok(RunOutput {
        experiment: Experiment::KmnCompare,
        tables: vec![table],
        summary: json!({
            "codec": kind.name(),
            "similarity": sim.name(),
            "items": data.len(),
            "mhn": eval_summary(&baseline),
            "kmn": points,
        }),
    })
}
