//! Browser bindings for a small recall playground. Every export returns a
//! JSON string so the page needs no generated glue beyond wasm-bindgen.

use hen_core::codec::{Centering, Codec, RandomProjection};
use hen_core::hopfield::{self, EnergyParams, Similarity};
use hen_core::kernel::{exp_kernel, KernelParams};
use hen_core::{fixtures, MemoryBank, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const NOISE: f64 = 0.05;
const SWEEP_BETAS: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 150.0, 500.0];

/// Square greyscale images of a shared base plus per-item noise, with the
/// left half of every query hidden.
struct Scene {
    side: usize,
    patterns: Vec<Vec<f64>>,
    mask: Vec<bool>,
}

impl Scene {
    fn new(count: usize, side: usize, seed: u64) -> Self {
        let patterns = fixtures::correlated(count.max(1), side * side, NOISE, seed);
        let mask = (0..side * side).map(|i| i % side >= side / 2).collect();
        Self { side, patterns, mask }
    }

    fn codec(&self, encoded: bool, seed: u64) -> Result<Codec> {
        let dim = self.side * self.side;
        if !encoded {
            return Ok(Codec::identity(dim));
        }
        let projection = RandomProjection::new(dim, dim, seed)?.with_centering(Centering::fit(&self.patterns)?)?;
        Ok(Codec::RandomProjection(projection))
    }

    fn encode(&self, codec: &Codec) -> Result<(MemoryBank, Vec<Vec<f64>>)> {
        let stored: Vec<Vec<f64>> = self.patterns.iter().map(|p| codec.encode(p)).collect::<Result<_>>()?;
        let queries = self
            .patterns
            .iter()
            .map(|p| codec.encode_partial(p, &self.mask))
            .collect::<Result<_>>()?;
        Ok((MemoryBank::from_rows(&stored)?, queries))
    }
}

fn to_pixels(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

#[derive(Serialize)]
pub struct Recall {
    pub side: usize,
    pub target: usize,
    pub matched: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub stored: Vec<f64>,
    pub query: Vec<f64>,
    pub recalled: Vec<f64>,
    pub energy: Vec<f64>,
}

/// Recalls item `target` from its half-hidden query.
pub fn recall_scene(count: usize, side: usize, target: usize, beta: f64, encoded: bool, seed: u64) -> Result<Recall> {
    let scene = Scene::new(count, side, seed);
    let target = target.min(scene.patterns.len() - 1);
    let codec = scene.codec(encoded, seed)?;
    let (bank, queries) = scene.encode(&codec)?;
    let params = EnergyParams::new(beta, Similarity::DotProduct)?;
    let result = hopfield::retrieve(&queries[target], &bank, &params)?;
    let hidden: Vec<f64> = scene.patterns[target]
        .iter()
        .zip(&scene.mask)
        .map(|(v, seen)| if *seen { *v } else { 0.0 })
        .collect();
    Ok(Recall {
        side,
        target,
        matched: result.matched_index,
        iterations: result.iterations_run,
        converged: result.converged,
        stored: scene.patterns[target].clone(),
        query: hidden,
        recalled: to_pixels(&codec.decode(&result.final_state)?),
        energy: result.energy_trajectory,
    })
}

#[derive(Serialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub raw_accuracy: f64,
    pub encoded_accuracy: f64,
}

fn accuracy(bank: &MemoryBank, queries: &[Vec<f64>], beta: f64) -> Result<f64> {
    let params = EnergyParams::new(beta, Similarity::DotProduct)?;
    let mut hits = 0;
    for (i, q) in queries.iter().enumerate() {
        if hopfield::retrieve(q, bank, &params)?.matched_index == Some(i) {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Identity accuracy over a fixed β grid for raw and projected patterns.
pub fn sweep_scene(count: usize, side: usize, seed: u64) -> Result<Vec<SweepPoint>> {
    let scene = Scene::new(count, side, seed);
    let (raw_bank, raw_queries) = scene.encode(&scene.codec(false, seed)?)?;
    let (enc_bank, enc_queries) = scene.encode(&scene.codec(true, seed)?)?;
    SWEEP_BETAS
        .iter()
        .map(|&beta| {
            Ok(SweepPoint {
                beta,
                raw_accuracy: accuracy(&raw_bank, &raw_queries, beta)?,
                encoded_accuracy: accuracy(&enc_bank, &enc_queries, beta)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct KernelCurve {
    pub cosine: Vec<f64>,
    pub kernel: Vec<f64>,
}

/// Kernel value between two unit vectors as their cosine runs from -1 to 1.
pub fn kernel_curve(alpha: f64, r: f64, points: usize) -> Result<KernelCurve> {
    let params = KernelParams::new(alpha, r)?;
    let points = points.max(2);
    let x = [1.0, 0.0];
    let mut cosine = Vec::with_capacity(points);
    let mut kernel = Vec::with_capacity(points);
    for i in 0..points {
        let c = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
        let y = [c, (1.0 - c * c).max(0.0).sqrt()];
        cosine.push(c);
        kernel.push(exp_kernel(&x, &y, &params)?);
    }
    Ok(KernelCurve { cosine, kernel })
}

fn to_json<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn recall(count: usize, side: usize, target: usize, beta: f64, encoded: bool, seed: u32) -> std::result::Result<String, JsError> {
    to_json(recall_scene(count, side, target, beta, encoded, seed.into()))
}

#[wasm_bindgen]
pub fn beta_sweep(count: usize, side: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_json(sweep_scene(count, side, seed.into()))
}

#[wasm_bindgen]
pub fn kernel_profile(alpha: f64, r: f64, points: usize) -> std::result::Result<String, JsError> {
    to_json(kernel_curve(alpha, r, points))
}
