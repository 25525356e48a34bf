//! Encoders and decoders between pattern space and latent space.
//!
//! The deterministic codecs here stand in for pretrained autoencoders at
//! desk scale. [`Codec::Precomputed`] carries latents produced elsewhere and
//! loaded from a HENB file.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::bank::{dot, norm};
use crate::error::{HenError, Result};
use crate::fixtures;

pub const DEFAULT_BLOCK_SIDE: usize = 16;

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HenError::DimensionMismatch { expected, got })
    }
}

/// Scales `v` to unit ℓ2 norm; the zero vector stays zero.
pub fn spherical_normalize(v: &mut [f64]) {
    let len = norm(v);
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
}

/// Shift applied before projection, with the typical norm of the shifted
/// patterns used to restore scale on decode.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl Centering {
    /// Mean of `patterns` and the mean ℓ2 norm of the centred patterns.
    pub fn fit<R: AsRef<[f64]>>(patterns: &[R]) -> Result<Self> {
        let dim = patterns.first().map(|p| p.as_ref().len()).ok_or(HenError::EmptyBank)?;
        let mut mean = vec![0.0; dim];
        for p in patterns {
            let p = p.as_ref();
            check_len(dim, p.len())?;
            mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
        }
        let n = patterns.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let scale = patterns
            .iter()
            .map(|p| {
                let d: Vec<f64> = p.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect();
                norm(&d)
            })
            .sum::<f64>()
            / n;
        Ok(Self {
            mean,
            scale: if scale > 0.0 { scale } else { 1.0 },
        })
    }
}

/// Seeded projection with orthonormal rows, followed by spherical
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    seed: u64,
    /// latent_dim × input_dim
    matrix: DMatrix<f64>,
    centering: Option<Centering>,
}

impl RandomProjection {
    pub fn new(input_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 || latent_dim > input_dim {
            return Err(HenError::InvalidParameter(format!(
                "projection needs 1 <= latent_dim <= input_dim, got {latent_dim} > {input_dim}"
            )));
        }
        let mut rng = fixtures::rng(seed);
        let gaussian = DMatrix::<f64>::from_fn(input_dim, latent_dim, |_, _| rng.sample(StandardNormal));
        // Thin QR gives input_dim × latent_dim with orthonormal columns.
        let q = gaussian.qr().q();
        Ok(Self {
            seed,
            matrix: q.transpose(),
            centering: None,
        })
    }

    /// Shifts patterns by a fitted mean before projecting.
    pub fn with_centering(mut self, centering: Centering) -> Result<Self> {
        check_len(self.input_dim(), centering.mean.len())?;
        self.centering = Some(centering);
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn centering(&self) -> Option<&Centering> {
        self.centering.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn encode(&self, pattern: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.matrix.nrows()];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, &p) in pattern.iter().enumerate() {
                let x = match &self.centering {
                    Some(ctr) => p - ctr.mean[c],
                    None => p,
                };
                acc += self.matrix[(r, c)] * x;
            }
            *o = acc;
        }
        spherical_normalize(&mut out);
        out
    }

    fn decode(&self, latent: &[f64]) -> Vec<f64> {
        let (rows, cols) = self.matrix.shape();
        (0..cols)
            .map(|c| {
                let back: f64 = (0..rows).map(|r| self.matrix[(r, c)] * latent[r]).sum();
                match &self.centering {
                    Some(ctr) => ctr.scale * back + ctr.mean[c],
                    None => back,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub id: u32,
    pub latent: Vec<f64>,
    pub original: Vec<f64>,
}

/// Latents produced by an external encoder, each paired with the pattern
/// it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    entries: Vec<TableEntry>,
    latent_dim: usize,
    input_dim: usize,
    pub source: String,
    by_original: HashMap<Vec<u64>, usize>,
}

fn pattern_key(pattern: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 compare equal, so they must hash equal too.
    pattern.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl EmbeddingTable {
    pub fn new(latent_dim: usize, input_dim: usize, source: impl Into<String>) -> Self {
        Self {
            entries: Vec::new(),
            latent_dim,
            input_dim,
            source: source.into(),
            by_original: HashMap::new(),
        }
    }

    pub fn from_entries(
        latent_dim: usize,
        input_dim: usize,
        source: impl Into<String>,
        entries: impl IntoIterator<Item = TableEntry>,
    ) -> Result<Self> {
        let mut table = Self::new(latent_dim, input_dim, source);
        for e in entries {
            table.insert(e)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, entry: TableEntry) -> Result<()> {
        check_len(self.latent_dim, entry.latent.len())?;
        check_len(self.input_dim, entry.original.len())?;
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(HenError::DuplicateId(entry.id));
        }
        for (col, v) in entry.latent.iter().chain(&entry.original).enumerate() {
            if !v.is_finite() {
                return Err(HenError::NonFinite {
                    row: self.entries.len(),
                    col,
                });
            }
        }
        // First entry wins when two ids share an original.
        self.by_original
            .entry(pattern_key(&entry.original))
            .or_insert(self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn get(&self, id: u32) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entry whose original equals `pattern` exactly.
    pub fn lookup(&self, pattern: &[f64]) -> Option<&TableEntry> {
        self.by_original.get(&pattern_key(pattern)).map(|&i| &self.entries[i])
    }

    /// Index of the entry whose latent has the highest cosine similarity
    /// with `latent`; ties go to the lowest index.
    pub fn nearest(&self, latent: &[f64]) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(HenError::EmptyTable);
        }
        check_len(self.latent_dim, latent.len())?;
        let q = norm(latent);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let denom = q * norm(&e.latent);
            let c = if denom > 0.0 { dot(latent, &e.latent) / denom } else { 0.0 };
            if c > best.1 {
                best = (i, c);
            }
        }
        Ok(best.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Codec {
    Identity { dim: usize },
    SphericalNorm { dim: usize },
    RandomProjection(RandomProjection),
    Precomputed(EmbeddingTable),
    /// Pixelized text blocks, passed through unchanged once rendered.
    PixelText { block_side: usize },
}

impl Codec {
    pub fn identity(dim: usize) -> Self {
        Codec::Identity { dim }
    }

    pub fn spherical(dim: usize) -> Self {
        Codec::SphericalNorm { dim }
    }

    pub fn random_projection(input_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        Ok(Codec::RandomProjection(RandomProjection::new(input_dim, latent_dim, seed)?))
    }

    pub fn precomputed(table: EmbeddingTable) -> Result<Self> {
        if table.is_empty() {
            return Err(HenError::EmptyTable);
        }
        Ok(Codec::Precomputed(table))
    }

    pub fn pixel_text(block_side: usize) -> Result<Self> {
        if block_side * block_side < 256 {
            return Err(HenError::BlockTooSmall { side: block_side });
        }
        Ok(Codec::PixelText { block_side })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Codec::Identity { .. } => "identity",
            Codec::SphericalNorm { .. } => "spherical",
            Codec::RandomProjection(_) => "projection",
            Codec::Precomputed(_) => "precomputed",
            Codec::PixelText { .. } => "pixel-text",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Codec::Identity { dim } | Codec::SphericalNorm { dim } => *dim,
            Codec::RandomProjection(p) => p.input_dim(),
            Codec::Precomputed(t) => t.input_dim(),
            Codec::PixelText { block_side } => block_side * block_side,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Codec::Identity { dim } | Codec::SphericalNorm { dim } => *dim,
            Codec::RandomProjection(p) => p.latent_dim(),
            Codec::Precomputed(t) => t.latent_dim(),
            Codec::PixelText { block_side } => block_side * block_side,
        }
    }

    pub fn encode(&self, pattern: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), pattern.len())?;
        Ok(match self {
            Codec::Identity { .. } | Codec::PixelText { .. } => pattern.to_vec(),
            Codec::SphericalNorm { .. } => {
                let mut out = pattern.to_vec();
                spherical_normalize(&mut out);
                out
            }
            Codec::RandomProjection(p) => p.encode(pattern),
            Codec::Precomputed(t) => t.lookup(pattern).ok_or(HenError::LookupMiss)?.latent.clone(),
        })
    }

    /// Value an unobserved coordinate takes before encoding: the point the
    /// codec treats as carrying no information.
    pub fn neutral_value(&self, index: usize) -> f64 {
        match self {
            Codec::RandomProjection(RandomProjection {
                centering: Some(c), ..
            }) => c.mean[index],
            _ => 0.0,
        }
    }

    /// Encodes a partially observed pattern. Coordinates with
    /// `observed[i] == false` are replaced by [`Codec::neutral_value`].
    pub fn encode_partial(&self, pattern: &[f64], observed: &[bool]) -> Result<Vec<f64>> {
        check_len(pattern.len(), observed.len())?;
        let filled: Vec<f64> = pattern
            .iter()
            .zip(observed)
            .enumerate()
            .map(|(i, (&v, &seen))| if seen { v } else { self.neutral_value(i) })
            .collect();
        self.encode(&filled)
    }

    /// Renders `text` with [`pixelize_text`] and encodes the block.
    pub fn encode_text(&self, text: &[u8]) -> Result<Vec<f64>> {
        let side = (self.input_dim() as f64).sqrt() as usize;
        if side * side != self.input_dim() {
            return Err(HenError::InvalidParameter(format!(
                "input dimension {} is not a square block",
                self.input_dim()
            )));
        }
        self.encode(&pixelize_text(text, side)?)
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        check_len(self.latent_dim(), latent.len())?;
        Ok(match self {
            Codec::Identity { .. } | Codec::SphericalNorm { .. } | Codec::PixelText { .. } => latent.to_vec(),
            Codec::RandomProjection(p) => p.decode(latent),
            Codec::Precomputed(t) => t.entries()[t.nearest(latent)?].original.clone(),
        })
    }
}

/// SHA-256 digest bits laid out row-major, most significant bit first, in
/// the first 256 cells of a `block_side × block_side` block.
pub fn pixelize_text(text: &[u8], block_side: usize) -> Result<Vec<f64>> {
    if block_side * block_side < 256 {
        return Err(HenError::BlockTooSmall { side: block_side });
    }
    let digest = Sha256::digest(text);
    let mut block = vec![0.0; block_side * block_side];
    for (byte_index, byte) in digest.iter().enumerate() {
        for bit in 0..8 {
            if byte & (0x80 >> bit) != 0 {
                block[byte_index * 8 + bit] = 1.0;
            }
        }
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (norm(a) * norm(b))
    }

    #[test]
    fn spherical_examples() {
        let c = Codec::spherical(2);
        assert_eq!(c.encode(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(c.encode(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(c.decode(&[0.6, 0.8]).unwrap(), vec![0.6, 0.8]);
        assert!(c.encode(&[1.0]).is_err());
    }

    #[test]
    fn projection_rows_are_orthonormal() {
        let p = RandomProjection::new(40, 12, 5).unwrap();
        let q = p.matrix();
        let gram = q * q.transpose();
        let dev = (gram - DMatrix::<f64>::identity(12, 12)).abs().max();
        assert!(dev <= 1e-10, "{dev}");
        assert_eq!(p, RandomProjection::new(40, 12, 5).unwrap());
        assert_ne!(p, RandomProjection::new(40, 12, 6).unwrap());
        assert!(RandomProjection::new(4, 5, 0).is_err());
    }

    #[test]
    fn projection_is_bitwise_deterministic() {
        let c = Codec::random_projection(20, 20, 3).unwrap();
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        assert_eq!(c.encode(&x).unwrap(), c.encode(&x).unwrap());
    }

    #[test]
    fn projection_round_trip_on_row_space() {
        let p = RandomProjection::new(30, 10, 11).unwrap();
        let c = Codec::RandomProjection(p.clone());
        // a unit vector inside the row space of Q
        let mut x: Vec<f64> = p.matrix().row(2).iter().zip(p.matrix().row(7).iter()).map(|(a, b)| a - 2.0 * b).collect();
        spherical_normalize(&mut x);
        let back = c.decode(&c.encode(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_preserves_cosine_on_row_space() {
        let p = RandomProjection::new(16, 6, 2).unwrap();
        let c = Codec::RandomProjection(p.clone());
        let x: Vec<f64> = (0..16).map(|i| p.matrix()[(0, i)] + 0.3 * p.matrix()[(4, i)]).collect();
        let y: Vec<f64> = (0..16).map(|i| -p.matrix()[(1, i)] + 0.5 * p.matrix()[(4, i)]).collect();
        let ex = c.encode(&x).unwrap();
        let ey = c.encode(&y).unwrap();
        assert!((cosine(&ex, &ey) - cosine(&x, &y)).abs() < 1e-10);
    }

    #[test]
    fn centred_projection_inverts_on_the_fitted_scale() {
        let patterns = fixtures::correlated(8, 12, 0.05, 4);
        let centering = Centering::fit(&patterns).unwrap();
        let c = Codec::RandomProjection(RandomProjection::new(12, 12, 1).unwrap().with_centering(centering.clone()).unwrap());
        // unobserved coordinates take the fitted mean
        let observed = vec![false; 12];
        let z = c.encode_partial(&patterns[0], &observed).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        assert_eq!(c.decode(&z).unwrap(), centering.mean);
        // full-rank square projection: decode(encode(x)) lands on the ray
        // from the mean through x, at the fitted distance
        let back = c.decode(&c.encode(&patterns[3]).unwrap()).unwrap();
        let d: Vec<f64> = back.iter().zip(&centering.mean).map(|(a, b)| a - b).collect();
        let e: Vec<f64> = patterns[3].iter().zip(&centering.mean).map(|(a, b)| a - b).collect();
        assert!((norm(&d) - centering.scale).abs() < 1e-10);
        assert!((cosine(&d, &e) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_encoding_zero_fills_without_centering() {
        let c = Codec::identity(3);
        assert_eq!(c.encode_partial(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap(), vec![1.0, 0.0, 3.0]);
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            3,
            "test",
            [
                TableEntry { id: 7, latent: vec![1.0, 0.0], original: vec![0.1, 0.2, 0.3] },
                TableEntry { id: 9, latent: vec![0.0, 1.0], original: vec![0.4, 0.5, 0.6] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn precomputed_lookup_and_nearest_decode() {
        let c = Codec::precomputed(table()).unwrap();
        assert_eq!(c.encode(&[0.4, 0.5, 0.6]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(c.encode(&[0.4, 0.5, 0.7]), Err(HenError::LookupMiss)));
        assert_eq!(c.decode(&[1.0, 0.0]).unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(c.decode(&[0.2, 0.9]).unwrap(), vec![0.4, 0.5, 0.6]);
    }

    #[test]
    fn table_rejects_duplicates_and_bad_dims() {
        let mut t = table();
        let dup = TableEntry { id: 7, latent: vec![0.0, 0.0], original: vec![0.0; 3] };
        assert!(matches!(t.insert(dup), Err(HenError::DuplicateId(7))));
        let short = TableEntry { id: 1, latent: vec![0.0], original: vec![0.0; 3] };
        assert!(t.insert(short).is_err());
        assert!(Codec::precomputed(EmbeddingTable::new(2, 3, "")).is_err());
        assert!(matches!(EmbeddingTable::new(2, 3, "").nearest(&[1.0, 0.0]), Err(HenError::EmptyTable)));
    }

    #[test]
    fn pixelize_empty_string_digest() {
        let block = pixelize_text(b"", 16).unwrap();
        let digest = [0xe3u8, 0xb0, 0xc4, 0x42];
        for (i, byte) in digest.iter().enumerate() {
            for bit in 0..8 {
                let expected = (byte >> (7 - bit)) & 1;
                assert_eq!(block[i * 8 + bit], expected as f64);
            }
        }
        assert_eq!(block[0], 1.0);
    }

    #[test]
    fn pixelize_pads_larger_blocks_and_rejects_small_ones() {
        let block = pixelize_text(b"a", 20).unwrap();
        assert_eq!(block.len(), 400);
        assert!(block[256..].iter().all(|v| *v == 0.0));
        assert!(matches!(pixelize_text(b"a", 15), Err(HenError::BlockTooSmall { side: 15 })));
        assert_ne!(pixelize_text(b"a", 16).unwrap(), pixelize_text(b"b", 16).unwrap());
    }

    #[test]
    fn pixel_text_codec_encodes_text() {
        let c = Codec::pixel_text(16).unwrap();
        assert_eq!(c.encode_text(b"a").unwrap(), pixelize_text(b"a", 16).unwrap());
    }
}
