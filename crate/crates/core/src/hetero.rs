//! Cross-modal memories: each row is `[image latent; text latent]`, and a
//! text-only query carries zeros in the image segment.

use std::collections::HashSet;

use crate::bank::{squared_distance, MemoryBank, StateVector};
use crate::codec::{spherical_normalize, Codec};
use crate::error::{HenError, Result};
use crate::hopfield::{self, combine_rows, lse_energy, softmax_in_place, EnergyParams, RetrievalResult, Similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeteroLayout {
    pub image_dim: usize,
    pub text_dim: usize,
}

impl HeteroLayout {
    pub fn new(image_dim: usize, text_dim: usize) -> Result<Self> {
        if image_dim == 0 || text_dim == 0 {
            return Err(HenError::InvalidParameter(
                "both hetero segments need at least one dimension".into(),
            ));
        }
        Ok(Self { image_dim, text_dim })
    }

    pub fn total(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn image<'a>(&self, row: &'a [f64]) -> &'a [f64] {
        &row[..self.image_dim]
    }

    pub fn text<'a>(&self, row: &'a [f64]) -> &'a [f64] {
        &row[self.image_dim..self.total()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroRecord {
    pub id: u32,
    pub image_latent: Vec<f64>,
    pub text_latent: Vec<f64>,
}

/// Stacks records as `[image; text]` rows in input order. With `normalize`,
/// each segment is scaled to unit norm on its own before concatenation.
pub fn build_hetero_bank(records: &[HeteroRecord], layout: HeteroLayout, normalize: bool) -> Result<MemoryBank> {
    let mut seen = HashSet::new();
    let mut data = Vec::with_capacity(records.len() * layout.total());
    for r in records {
        if !seen.insert(r.id) {
            return Err(HenError::DuplicateId(r.id));
        }
        for (segment, expected) in [(&r.image_latent, layout.image_dim), (&r.text_latent, layout.text_dim)] {
            if segment.len() != expected {
                return Err(HenError::DimensionMismatch {
                    expected,
                    got: segment.len(),
                });
            }
            let start = data.len();
            data.extend_from_slice(segment);
            if normalize {
                spherical_normalize(&mut data[start..]);
            }
        }
    }
    MemoryBank::from_flat(records.len(), layout.total(), data)
}

/// `[0; text_latent]`.
pub fn make_text_query(text_latent: &[f64], layout: HeteroLayout) -> Result<StateVector> {
    if text_latent.len() != layout.text_dim {
        return Err(HenError::DimensionMismatch {
            expected: layout.text_dim,
            got: text_latent.len(),
        });
    }
    let mut q = vec![0.0; layout.image_dim];
    q.extend_from_slice(text_latent);
    StateVector::new(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroRetrieval {
    /// Decoded image segment of the final state.
    pub image: Vec<f64>,
    /// Image segment of the final state, still in latent space.
    pub image_latent: Vec<f64>,
    pub result: RetrievalResult,
}

/// Runs the Hopfield recurrence on the full concatenated state and decodes
/// the image segment of the result.
///
/// With `clamp_text` the text segment is reset to the query's text after
/// every step, so only the image segment evolves.
pub fn hetero_retrieve(
    query: &[f64],
    bank: &MemoryBank,
    layout: HeteroLayout,
    params: &EnergyParams,
    image_codec: &Codec,
    clamp_text: bool,
) -> Result<HeteroRetrieval> {
    if bank.dim() != layout.total() {
        return Err(HenError::DimensionMismatch {
            expected: layout.total(),
            got: bank.dim(),
        });
    }
    let result = if clamp_text {
        retrieve_clamped(query, bank, layout, params)?
    } else {
        hopfield::retrieve(query, bank, params)?
    };
    let image_latent = layout.image(&result.final_state).to_vec();
    let image = image_codec.decode(&image_latent)?;
    Ok(HeteroRetrieval {
        image,
        image_latent,
        result,
    })
}

fn retrieve_clamped(
    query: &[f64],
    bank: &MemoryBank,
    layout: HeteroLayout,
    params: &EnergyParams,
) -> Result<RetrievalResult> {
    params.validate()?;
    bank.check_dim(query.len())?;
    let text = layout.text(query).to_vec();
    let mut state = query.to_vec();
    let mut weights = vec![0.0; bank.count()];
    let mut energy_trajectory = Vec::new();
    let mut iterations_run = 0;
    let mut converged = false;
    for t in 1..=params.max_iters {
        for (w, row) in weights.iter_mut().zip(bank.rows()) {
            *w = params.beta * params.similarity.eval(row, &state);
        }
        softmax_in_place(&mut weights);
        let mut next = combine_rows(bank, &weights);
        next[layout.image_dim..].copy_from_slice(&text);
        let step = squared_distance(&next, &state).sqrt();
        state = next;
        iterations_run = t;
        if params.similarity == Similarity::DotProduct {
            energy_trajectory.push(lse_energy(&state, bank, params)?);
        }
        converged = step <= params.convergence_tol;
        if converged && params.convergence_tol > 0.0 {
            break;
        }
    }
    let matched = hopfield::matched_index(&state, bank, params.similarity);
    Ok(RetrievalResult {
        final_state: StateVector::new(state)?,
        iterations_run,
        energy_trajectory,
        converged,
        matched_index: Some(matched),
    })
}

/// Index of the stored row whose image segment is nearest to `image_latent`
/// in Euclidean distance, with the distance to every stored image segment.
pub fn nearest_image(image_latent: &[f64], bank: &MemoryBank, layout: HeteroLayout) -> (usize, Vec<f64>) {
    let distances: Vec<f64> = bank
        .rows()
        .map(|row| squared_distance(layout.image(row), image_latent).sqrt())
        .collect();
    let mut best = 0;
    for (i, d) in distances.iter().enumerate() {
        if *d < distances[best] {
            best = i;
        }
    }
    (best, distances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::norm;

    fn record(id: u32, image: &[f64], text: &[f64]) -> HeteroRecord {
        HeteroRecord {
            id,
            image_latent: image.to_vec(),
            text_latent: text.to_vec(),
        }
    }

    #[test]
    fn bank_layout_and_normalization() {
        let layout = HeteroLayout::new(2, 3).unwrap();
        let bank = build_hetero_bank(&[record(0, &[1.0, 2.0], &[3.0, 4.0, 5.0])], layout, false).unwrap();
        assert_eq!(bank.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);

        let bank = build_hetero_bank(
            &[record(0, &[3.0, 4.0], &[0.0, 0.0, 2.0]), record(1, &[1.0, 1.0], &[1.0, 2.0, 2.0])],
            layout,
            true,
        )
        .unwrap();
        for row in bank.rows() {
            assert!((norm(layout.image(row)) - 1.0).abs() < 1e-12);
            assert!((norm(layout.text(row)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bank_errors() {
        let layout = HeteroLayout::new(2, 1).unwrap();
        let dup = [record(4, &[1.0, 0.0], &[1.0]), record(4, &[0.0, 1.0], &[1.0])];
        assert!(matches!(build_hetero_bank(&dup, layout, true), Err(HenError::DuplicateId(4))));
        let short = [record(0, &[1.0], &[1.0])];
        assert!(build_hetero_bank(&short, layout, true).is_err());
        // shared text keys are allowed
        let shared = [record(0, &[1.0, 0.0], &[1.0]), record(1, &[0.0, 1.0], &[1.0])];
        assert!(build_hetero_bank(&shared, layout, true).is_ok());
        assert!(HeteroLayout::new(0, 2).is_err());
    }

    #[test]
    fn text_query_zero_pads_image_segment() {
        let layout = HeteroLayout::new(3, 2).unwrap();
        assert_eq!(make_text_query(&[1.0, 2.0], layout).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(make_text_query(&[1.0], layout).is_err());
    }

    #[test]
    fn zero_query_first_step_is_the_mean() {
        let layout = HeteroLayout::new(2, 2).unwrap();
        let bank = build_hetero_bank(
            &[record(0, &[1.0, 0.0], &[1.0, 0.0]), record(1, &[0.0, 1.0], &[0.0, 1.0])],
            layout,
            true,
        )
        .unwrap();
        let params = EnergyParams::new(5.0, Similarity::DotProduct)
            .unwrap()
            .with_iterations(1, 0.0)
            .unwrap();
        let q = make_text_query(&[0.0, 0.0], layout).unwrap();
        let out = hetero_retrieve(&q, &bank, layout, &params, &Codec::identity(2), false).unwrap();
        assert_eq!(out.image_latent, vec![0.5, 0.5]);
    }

    #[test]
    fn clamped_retrieval_keeps_text_fixed() {
        let layout = HeteroLayout::new(2, 2).unwrap();
        let bank = build_hetero_bank(
            &[record(0, &[1.0, 0.0], &[1.0, 0.0]), record(1, &[0.0, 1.0], &[0.0, 1.0])],
            layout,
            true,
        )
        .unwrap();
        let params = EnergyParams::new(50.0, Similarity::DotProduct).unwrap();
        let q = make_text_query(&[0.0, 1.0], layout).unwrap();
        let out = hetero_retrieve(&q, &bank, layout, &params, &Codec::identity(2), true).unwrap();
        assert_eq!(layout.text(&out.result.final_state), &[0.0, 1.0]);
        assert!(squared_distance(&out.image_latent, &[0.0, 1.0]).sqrt() < 1e-6);
        assert_eq!(nearest_image(&out.image_latent, &bank, layout).0, 1);
    }
}
