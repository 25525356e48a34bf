//! Evaluation instruments: reconstruction error, structural similarity,
//! rank-collapse tracking and query/memory cosine separability.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bank::{dot, norm};
use crate::error::{HenError, Result};
use crate::image::{Image, ImageShape};
use crate::linalg;

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HenError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_side: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_side: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(HenError::InvalidParameter(format!(
                "window side must be odd and >= 3, got {}",
                self.window_side
            )));
        }
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 || self.dynamic_range.is_nan() || self.dynamic_range <= 0.0 {
            return Err(HenError::InvalidParameter(
                "sigma and dynamic range must be positive".into(),
            ));
        }
        for k in [self.k1, self.k2] {
            if !(k > 0.0 && k < 1.0) {
                return Err(HenError::InvalidParameter(format!(
                    "ssim constant {k} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }

    fn window(&self) -> Vec<f64> {
        let radius = (self.window_side / 2) as f64;
        let two_var = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let raw: Vec<f64> = (0..self.window_side)
            .map(|i| {
                let d = i as f64 - radius;
                (-d * d / two_var).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Separable Gaussian filter keeping only positions where the window lies
/// fully inside the plane.
fn filter_valid(plane: &[f64], height: usize, width: usize, window: &[f64]) -> Vec<f64> {
    let side = window.len();
    let out_w = width - side + 1;
    let out_h = height - side + 1;
    let mut horizontal = vec![0.0; height * out_w];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..out_w {
            horizontal[y * out_w + x] = window.iter().zip(&row[x..x + side]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        for x in 0..out_w {
            out[y * out_w + x] = window
                .iter()
                .enumerate()
                .map(|(i, w)| w * horizontal[(y + i) * out_w + x])
                .sum();
        }
    }
    out
}

fn check_range(img: &Image, range: f64) -> Result<()> {
    match img
        .as_slice()
        .iter()
        .position(|v| !(0.0..=range).contains(v))
    {
        Some(index) => Err(HenError::OutOfRange {
            value: img.as_slice()[index],
            range,
            index,
        }),
        None => Ok(()),
    }
}

/// Mean single-scale SSIM over all valid window positions and channels.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    let shape = a.shape();
    if b.shape() != shape {
        return Err(HenError::DimensionMismatch {
            expected: shape.len(),
            got: b.shape().len(),
        });
    }
    let side = params.window_side;
    if shape.height < side || shape.width < side {
        return Err(HenError::ImageTooSmall {
            height: shape.height,
            width: shape.width,
            window: side,
        });
    }
    check_range(a, params.dynamic_range)?;
    check_range(b, params.dynamic_range)?;

    let window = params.window();
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let (h, w) = (shape.height, shape.width);
    let plane_len = h * w;
    let mut total = 0.0;
    let mut count = 0usize;

    for c in 0..shape.channels {
        let x: Vec<f64> = (0..plane_len).map(|i| a.as_slice()[i * shape.channels + c]).collect();
        let y: Vec<f64> = (0..plane_len).map(|i| b.as_slice()[i * shape.channels + c]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

        let mu_x = filter_valid(&x, h, w, &window);
        let mu_y = filter_valid(&y, h, w, &window);
        let e_xx = filter_valid(&xx, h, w, &window);
        let e_yy = filter_valid(&yy, h, w, &window);
        let e_xy = filter_valid(&xy, h, w, &window);

        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let structure = (2.0 * cov + c2) / (var_x + var_y + c2);
            total += luminance * structure;
            count += 1;
        }
    }
    // Rounding in the mean can land an ulp above 1.
    Ok((total / count as f64).min(1.0))
}

pub fn one_minus_ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    Ok(1.0 - ssim(a, b, params)?)
}

/// Stacks equal-length rows into an N × K matrix.
pub fn rows_to_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(n * k);
    for row in rows {
        let row = row.as_ref();
        if row.len() != k {
            return Err(HenError::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(DMatrix::from_row_slice(n, k, &flat))
}

/// `rank(recovered) / rank(bank)`, each rank counted above
/// `tol_factor · σ_max` of its own matrix.
pub fn relative_rank(recovered: &DMatrix<f64>, bank: &DMatrix<f64>, tol_factor: f64) -> Result<f64> {
    if recovered.shape() != bank.shape() {
        return Err(HenError::DimensionMismatch {
            expected: bank.len(),
            got: recovered.len(),
        });
    }
    let bank_rank = linalg::numerical_rank(bank, tol_factor)?;
    if bank_rank == 0 {
        return Err(HenError::ZeroRank);
    }
    let recovered_rank = linalg::numerical_rank(recovered, tol_factor)?;
    Ok(recovered_rank as f64 / bank_rank as f64)
}

/// Relative rank of the recovered state matrix at each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTrace {
    pub per_iteration_rr: Vec<f64>,
    pub tol_factor: f64,
    pub bank_rank: usize,
}

impl RankTrace {
    pub fn compute(snapshots: &[DMatrix<f64>], bank: &DMatrix<f64>, tol_factor: f64) -> Result<Self> {
        let bank_rank = linalg::numerical_rank(bank, tol_factor)?;
        if bank_rank == 0 {
            return Err(HenError::ZeroRank);
        }
        let per_iteration_rr = snapshots
            .iter()
            .map(|s| {
                if s.shape() != bank.shape() {
                    return Err(HenError::DimensionMismatch {
                        expected: bank.len(),
                        got: s.len(),
                    });
                }
                Ok(linalg::numerical_rank(s, tol_factor)? as f64 / bank_rank as f64)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            per_iteration_rr,
            tol_factor,
            bank_rank,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub self_count: usize,
    pub cross_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub self_sims: Vec<f64>,
    pub cross_sims: Vec<f64>,
    pub self_mean: f64,
    pub self_std: f64,
    pub cross_mean: f64,
    pub cross_std: f64,
    /// `min(self) - max(cross)`; positive means the histograms do not overlap.
    pub gap: f64,
    pub histogram_bins: Vec<HistogramBin>,
    /// Pairs involving a zero-norm row, scored as similarity 0.
    pub zero_norm_pairs: usize,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// All pairwise cosine similarities between query `i` and memory `j`,
/// split into self (`i == j`) and cross pairs.
pub fn cosine_report<R: AsRef<[f64]>>(queries: &[R], bank: &[R], bins: usize) -> Result<SeparabilityReport> {
    if queries.len() != bank.len() {
        return Err(HenError::DimensionMismatch {
            expected: bank.len(),
            got: queries.len(),
        });
    }
    if bins == 0 {
        return Err(HenError::InvalidParameter("histogram needs at least one bin".into()));
    }
    let k = bank.first().map(|r| r.as_ref().len()).unwrap_or(0);
    for row in queries.iter().chain(bank) {
        if row.as_ref().len() != k {
            return Err(HenError::DimensionMismatch {
                expected: k,
                got: row.as_ref().len(),
            });
        }
    }
    let q_norms: Vec<f64> = queries.iter().map(|q| norm(q.as_ref())).collect();
    let m_norms: Vec<f64> = bank.iter().map(|m| norm(m.as_ref())).collect();

    let n = bank.len();
    let mut self_sims = Vec::with_capacity(n);
    let mut cross_sims = Vec::with_capacity(n * n.saturating_sub(1));
    let mut zero_norm_pairs = 0;
    for (i, q) in queries.iter().enumerate() {
        for (j, m) in bank.iter().enumerate() {
            let denom = q_norms[i] * m_norms[j];
            let c = if denom == 0.0 {
                zero_norm_pairs += 1;
                0.0
            } else {
                (dot(q.as_ref(), m.as_ref()) / denom).clamp(-1.0, 1.0)
            };
            if i == j {
                self_sims.push(c);
            } else {
                cross_sims.push(c);
            }
        }
    }

    let width = 2.0 / bins as f64;
    let mut histogram_bins: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            bin_low: -1.0 + b as f64 * width,
            bin_high: -1.0 + (b + 1) as f64 * width,
            self_count: 0,
            cross_count: 0,
        })
        .collect();
    let bin_of = |v: f64| (((v + 1.0) / width) as usize).min(bins - 1);
    for &v in &self_sims {
        histogram_bins[bin_of(v)].self_count += 1;
    }
    for &v in &cross_sims {
        histogram_bins[bin_of(v)].cross_count += 1;
    }

    let (self_mean, self_std) = mean_std(&self_sims);
    let (cross_mean, cross_std) = mean_std(&cross_sims);
    let min_self = self_sims.iter().copied().fold(f64::INFINITY, f64::min);
    // With a single pair there is no cross similarity to separate from.
    let max_cross = cross_sims.iter().copied().fold(-1.0, f64::max);
    Ok(SeparabilityReport {
        self_sims,
        cross_sims,
        self_mean,
        self_std,
        cross_mean,
        cross_std,
        gap: min_self - max_cross,
        histogram_bins,
        zero_norm_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub mse: f64,
    pub one_minus_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEval {
    pub mean_mse: f64,
    /// `None` when no image shape applies to the compared vectors.
    pub mean_one_minus_ssim: Option<f64>,
    pub pairs: Vec<PairMetrics>,
}

/// Pairwise MSE (and 1 − SSIM when an image shape is given) between each
/// stored original and its retrieval, averaged over the batch.
pub fn batch_eval<R: AsRef<[f64]>, S: AsRef<[f64]>>(
    originals: &[R],
    retrieved: &[S],
    ssim_shape: Option<(ImageShape, &SsimParams)>,
) -> Result<BatchEval> {
    if originals.len() != retrieved.len() {
        return Err(HenError::DimensionMismatch {
            expected: originals.len(),
            got: retrieved.len(),
        });
    }
    let pairs = originals
        .iter()
        .zip(retrieved)
        .map(|(o, r)| {
            let mse = mse(o.as_ref(), r.as_ref())?;
            let one_minus_ssim = match ssim_shape {
                Some((shape, params)) => {
                    let a = Image::new(shape, o.as_ref().to_vec())?;
                    let b = Image::new(shape, r.as_ref().to_vec())?;
                    Some(one_minus_ssim(&a, &b, params)?)
                }
                None => None,
            };
            Ok(PairMetrics { mse, one_minus_ssim })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len().max(1) as f64;
    let mean_mse = pairs.iter().map(|p| p.mse).sum::<f64>() / n;
    let mean_one_minus_ssim = ssim_shape.map(|_| pairs.iter().filter_map(|p| p.one_minus_ssim).sum::<f64>() / n);
    Ok(BatchEval {
        mean_mse,
        mean_one_minus_ssim,
        pairs,
    })
}
