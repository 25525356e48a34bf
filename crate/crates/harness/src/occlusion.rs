use hen_core::image::{Image, ImageShape};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Occlusion {
    /// Zero columns `[0, W/2)`.
    LeftHalf,
    /// Zero rows `[0, H/2)`.
    TopHalf,
    None,
}

impl Occlusion {
    /// Per-value flag in flattened (row-major, channel-last) order; `false`
    /// marks an occluded value.
    pub fn observed_mask(self, shape: ImageShape) -> Vec<bool> {
        let mut mask = vec![true; shape.len()];
        for y in 0..shape.height {
            for x in 0..shape.width {
                let hidden = match self {
                    Occlusion::LeftHalf => x < shape.width / 2,
                    Occlusion::TopHalf => y < shape.height / 2,
                    Occlusion::None => false,
                };
                if hidden {
                    for c in 0..shape.channels {
                        mask[shape.index(y, x, c)] = false;
                    }
                }
            }
        }
        mask
    }
}

pub fn occlude(image: &Image, mode: Occlusion) -> Image {
    let mask = mode.observed_mask(image.shape());
    let data = image
        .as_slice()
        .iter()
        .zip(&mask)
        .map(|(v, seen)| if *seen { *v } else { 0.0 })
        .collect();
    Image::new(image.shape(), data).expect("mask matches image shape")
}
